"""Command-line front end: ``xcov <mode> --config cfg.json [--out path] [--threads N] [--seed S]``.

Every output starts with ``#`` comment lines recording the tool version, the
seed and the fully resolved configuration, so identical inputs give
byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .bulk import binned_density, continuous_fraction, continuous_mass, density, edge
from .errors import ConfigError, DegenerateInputError, DomainError, XcovError
from .outliers import Branch, critical_lambda_symmetric, phase_boundary, predict_outliers
from .overlaps import beta_optimal, overlap_m
from .pls import pls_mode_a, pls_svd, recovery_report
from .polys import AspectRatios, Spike
from .sim import ModelConfig, cross_cov, run_trials, sample_instance, squared_singular_values, top_svd

MODES = (
    "theory-bulk",
    "theory-outliers",
    "theory-overlaps",
    "theory-phase",
    "sim-spectrum",
    "sim-bbp-sweep",
    "pls-run",
)
TOP_KEYS = {"mode", "alpha", "spikes", "n", "trials", "seed", "grid", "format", "output", "overlays"}
SPIKE_KEYS = ("lambda_x", "lambda_y", "rho")
GRID_DEFAULTS: dict[str, dict[str, Any]] = {
    "theory-bulk": {"x_min": None, "x_max": None, "points": 200, "epsilon": 1e-6},
    "theory-outliers": {},
    "theory-overlaps": {},
    "theory-phase": {"rhos": [0.0, 0.5, 0.9], "lambda_x_min": 0.1, "lambda_x_max": 4.0, "points": 40},
    "sim-spectrum": {"bins": 40, "top_k": None},
    "sim-bbp-sweep": {"lambdas": None, "lambda_min": 0.5, "lambda_max": 5.0, "points": 10, "rho": 0.5},
    "pls-run": {"r0": 1, "method": "both"},
}


@dataclass
class ExperimentConfig:
    mode: str
    alpha: tuple[float, float] = (1.0, 1.0)
    spikes: tuple[tuple[float, float, float], ...] = ()
    n: int = 2000
    trials: int = 10
    seed: int = 0
    grid: dict = field(default_factory=dict)
    format: str = "csv"
    output: str | None = None
    overlays: tuple[str, ...] = ()

    @property
    def ratios(self) -> AspectRatios:
        return AspectRatios(*self.alpha)

    @property
    def spike_objects(self) -> list[Spike]:
        return [Spike(*s) for s in self.spikes]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = list(self.alpha)
        d["spikes"] = [dict(zip(SPIKE_KEYS, s)) for s in self.spikes]
        d["overlays"] = list(self.overlays)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


# -- config parsing -----------------------------------------------------------


def _number(key: str, value: Any, *, positive: bool = False, allow_zero: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(key, f"expected a finite number, got {value!r}")
    if positive and not (value > 0 or (allow_zero and value == 0)):
        raise ConfigError(key, f"must be {'non-negative' if allow_zero else 'positive'}, got {value!r}")
    return float(value)


def _integer(key: str, value: Any, lo: int = 1, hi: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if value < lo or (hi is not None and value > hi):
        raise ConfigError(key, f"out of range [{lo}, {hi if hi is not None else 'inf'}]: {value}")
    return value


def _rho(key: str, value: Any) -> float:
    v = _number(key, value)
    if abs(v) >= 1:
        raise ConfigError(key, f"must lie in (-1, 1), got {v}")
    return v


def _check_keys(key: str, obj: Any, allowed: Iterable[str]) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(key, f"expected an object, got {type(obj).__name__}")
    allowed = set(allowed)
    for k in obj:
        if k not in allowed:
            raise ConfigError(f"{key}.{k}" if key else k, "unknown key")
    return obj


def _parse_grid(mode: str, raw: Any, ratios: AspectRatios) -> dict:
    defaults = GRID_DEFAULTS[mode]
    raw = _check_keys("grid", raw if raw is not None else {}, defaults)
    g = {**defaults, **raw}
    if mode == "theory-bulk":
        e2 = edge(ratios) ** 2
        g["x_min"] = _number("grid.x_min", g["x_min"] if g["x_min"] is not None else 1e-3 * e2, positive=True)
        g["x_max"] = _number("grid.x_max", g["x_max"] if g["x_max"] is not None else 1.1 * e2, positive=True)
        if g["x_max"] <= g["x_min"]:
            raise ConfigError("grid.x_max", "must exceed grid.x_min")
        g["points"] = _integer("grid.points", g["points"], 2)
        g["epsilon"] = _number("grid.epsilon", g["epsilon"], positive=True)
        if g["epsilon"] > 1e-3:
            raise ConfigError("grid.epsilon", "must not exceed 1e-3")
    elif mode == "theory-phase":
        rhos = g["rhos"]
        if not isinstance(rhos, list) or not rhos:
            raise ConfigError("grid.rhos", "expected a non-empty list")
        g["rhos"] = [_rho(f"grid.rhos[{i}]", r) for i, r in enumerate(rhos)]
        g["lambda_x_min"] = _number("grid.lambda_x_min", g["lambda_x_min"], positive=True)
        g["lambda_x_max"] = _number("grid.lambda_x_max", g["lambda_x_max"], positive=True)
        if g["lambda_x_max"] < g["lambda_x_min"]:
            raise ConfigError("grid.lambda_x_max", "must not be below grid.lambda_x_min")
        g["points"] = _integer("grid.points", g["points"], 1)
    elif mode == "sim-spectrum":
        g["bins"] = _integer("grid.bins", g["bins"], 1)
        if g["top_k"] is not None:
            g["top_k"] = _integer("grid.top_k", g["top_k"], 1)
    elif mode == "sim-bbp-sweep":
        if g["lambdas"] is not None:
            if not isinstance(g["lambdas"], list) or not g["lambdas"]:
                raise ConfigError("grid.lambdas", "expected a non-empty list")
            g["lambdas"] = [_number(f"grid.lambdas[{i}]", v, positive=True) for i, v in enumerate(g["lambdas"])]
        g["lambda_min"] = _number("grid.lambda_min", g["lambda_min"], positive=True)
        g["lambda_max"] = _number("grid.lambda_max", g["lambda_max"], positive=True)
        g["points"] = _integer("grid.points", g["points"], 1)
        g["rho"] = _rho("grid.rho", g["rho"])
    elif mode == "pls-run":
        g["r0"] = _integer("grid.r0", g["r0"], 1)
        if g["method"] not in ("mode-a", "svd", "both"):
            raise ConfigError("grid.method", f"expected mode-a, svd or both, got {g['method']!r}")
    return g


def parse_config(raw: Any, mode: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Validate a JSON document into an ExperimentConfig (unknown keys are errors)."""
    raw = _check_keys("", raw, TOP_KEYS)
    cfg_mode = raw.get("mode")
    if mode is None:
        mode = cfg_mode
    elif cfg_mode is not None and cfg_mode != mode:
        raise ConfigError("mode", f"config says {cfg_mode!r} but {mode!r} was requested")
    if mode not in MODES:
        raise ConfigError("mode", f"expected one of {', '.join(MODES)}, got {mode!r}")

    alpha = raw.get("alpha", [1.0, 1.0])
    if not isinstance(alpha, list) or len(alpha) != 2:
        raise ConfigError("alpha", "expected a list [alpha_x, alpha_y]")
    alpha = (_number("alpha[0]", alpha[0], positive=True), _number("alpha[1]", alpha[1], positive=True))

    spikes_raw = raw.get("spikes", [])
    if not isinstance(spikes_raw, list):
        raise ConfigError("spikes", "expected a list")
    spikes = []
    for i, s in enumerate(spikes_raw):
        key = f"spikes[{i}]"
        _check_keys(key, s, SPIKE_KEYS)
        missing = [k for k in SPIKE_KEYS if k not in s]
        if missing:
            raise ConfigError(f"{key}.{missing[0]}", "missing")
        spikes.append((
            _number(f"{key}.lambda_x", s["lambda_x"], positive=True),
            _number(f"{key}.lambda_y", s["lambda_y"], positive=True),
            _rho(f"{key}.rho", s["rho"]),
        ))
    if mode in ("theory-outliers", "theory-overlaps", "pls-run") and not spikes:
        raise ConfigError("spikes", f"mode {mode} needs at least one spike")

    n = _integer("n", raw.get("n", 2000), 1)
    trials = _integer("trials", raw.get("trials", 10), 1)
    seed = _integer("seed", raw.get("seed", 0) if seed is None else seed, 0, 2**64 - 1)
    fmt = raw.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("format", f"expected csv or json, got {fmt!r}")
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", "expected a path string or null")
    overlays = raw.get("overlays", [])
    if not isinstance(overlays, list) or not all(isinstance(p, str) for p in overlays):
        raise ConfigError("overlays", "expected a list of CSV paths")
    if overlays and mode != "theory-phase":
        raise ConfigError("overlays", "only the theory-phase mode accepts overlays")

    ratios = AspectRatios(*alpha)
    grid = _parse_grid(mode, raw.get("grid"), ratios)
    cfg = ExperimentConfig(mode, alpha, tuple(spikes), n, trials, seed, grid, fmt, output, tuple(overlays))
    if mode.startswith("sim") or mode == "pls-run":
        sim_spikes = cfg.spike_objects if mode != "sim-bbp-sweep" else [Spike(1.0, 1.0, grid["rho"])]
        try:
            ModelConfig(ratios, sim_spikes, n, seed)
        except DomainError as exc:
            raise ConfigError("n", str(exc)) from exc
        if mode == "pls-run":
            d_x, d_y = ratios.dims(n)
            if grid["r0"] > min(d_x, d_y):
                raise ConfigError("grid.r0", f"exceeds min(d_x, d_y) = {min(d_x, d_y)}")
    return cfg


def load_config(path: str | Path, mode: str | None = None, seed: int | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError("config", str(exc)) from exc
    return parse_config(raw, mode, seed)


# -- overlays -----------------------------------------------------------------


@dataclass(frozen=True)
class Curve:
    label: str
    x: tuple[float, ...]
    y: tuple[float, ...]


class OverlayParseError(ConfigError):
    def __init__(self, path: str, line: int, message: str):
        super().__init__("overlays", f"{path}, line {line}: {message}")
        self.line = line


def overlay_import(path: str | Path) -> list[Curve]:
    """Read ``x,y[,label]`` CSV curves; rows without a label form one unnamed curve."""
    path = str(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise OverlayParseError(path, 1, "empty file")
    header = [h.strip() for h in rows[0]]
    if header not in (["x", "y"], ["x", "y", "label"]):
        raise OverlayParseError(path, 1, f"header must be x,y or x,y,label, got {','.join(header)}")
    curves: dict[str, tuple[list, list]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise OverlayParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
        try:
            x, y = float(row[0]), float(row[1])
        except ValueError:
            raise OverlayParseError(path, lineno, f"non-numeric value in {row!r}") from None
        label = row[2].strip() if len(header) == 3 else ""
        xs, ys = curves.setdefault(label, ([], []))
        xs.append(x)
        ys.append(y)
    return [Curve(k, tuple(v[0]), tuple(v[1])) for k, v in curves.items()]


# -- modes --------------------------------------------------------------------


@dataclass
class Table:
    columns: list[str]
    rows: list[list]
    diagnostics: list[str] = field(default_factory=list)


def _linspace(lo: float, hi: float, points: int) -> list[float]:
    return [float(v) for v in np.linspace(lo, hi, points)]


def _theory_bulk(cfg: ExperimentConfig, threads: int) -> Table:
    g, ratios = cfg.grid, cfg.ratios
    xs = np.linspace(g["x_min"], g["x_max"], g["points"])
    dens = density(ratios, xs, g["epsilon"])
    mass = continuous_mass(ratios)
    diag = [f"edge^2={edge(ratios) ** 2:.12g}", f"mass={mass:.6f} expected={continuous_fraction(ratios):.6f}"]
    return Table(["x", "density"], [[float(x), float(d)] for x, d in zip(xs, dens)], diag)


def _theory_outliers(cfg: ExperimentConfig, threads: int) -> Table:
    ratios = cfg.ratios
    rows = [
        [p.spike_index, p.branch.value, p.r_value, p.position, p.detectable]
        for p in predict_outliers(ratios, cfg.spike_objects)
    ]
    return Table(["spike_index", "branch", "r_value", "position", "detectable"], rows, [f"edge={edge(ratios):.12g}"])


def _theory_overlaps(cfg: ExperimentConfig, threads: int) -> Table:
    ratios = cfg.ratios
    preds = {(p.spike_index, p.branch): p for p in predict_outliers(ratios, cfg.spike_objects)}
    rows = []
    for k, spike in enumerate(cfg.spike_objects, start=1):
        ov = {b: overlap_m(ratios, spike, b, k) for b in Branch}
        rot = []
        for attr in ("m_x", "m_y"):
            mm, mp = getattr(ov[Branch.MINUS], attr), getattr(ov[Branch.PLUS], attr)
            try:
                plan = beta_optimal(mm, mp)
                rot += [plan.beta_opt, plan.q_opt]
            except DegenerateInputError:
                rot += [None, None]
        for b in Branch:
            p = preds[(k, b)]
            rows.append([k, b.value, p.detectable, p.position, ov[b].m_x, ov[b].m_y, *rot])
    cols = ["spike_index", "branch", "detectable", "position", "m_x", "m_y", "beta_opt_x", "q_opt_x", "beta_opt_y", "q_opt_y"]
    return Table(cols, rows)


def _theory_phase(cfg: ExperimentConfig, threads: int) -> Table:
    g, ratios = cfg.grid, cfg.ratios
    grid = _linspace(g["lambda_x_min"], g["lambda_x_max"], g["points"])
    rows, diag = [], []
    for rho in g["rhos"]:
        rows += [[rho, lx, ly] for lx, ly in phase_boundary(ratios, rho, grid)]
        diag.append(f"rho={rho:g}: symmetric critical lambda={critical_lambda_symmetric(ratios, rho):.12g}")
    cols = ["rho", "lambda_x", "critical_lambda_y"]
    if cfg.overlays:
        rows = [["pls", *r] for r in rows]
        for path in cfg.overlays:
            for curve in overlay_import(path):
                label = curve.label or Path(path).stem
                rows += [[label, None, x, y] for x, y in zip(curve.x, curve.y)]
        cols = ["curve", *cols]
    return Table(cols, rows, diag)


def _model(cfg: ExperimentConfig, spikes: Sequence[Spike]) -> ModelConfig:
    return ModelConfig(cfg.ratios, tuple(spikes), cfg.n, cfg.seed)


def _sim_spectrum(cfg: ExperimentConfig, threads: int) -> Table:
    model = _model(cfg, cfg.spike_objects)
    ratios = model.realized_ratios
    inst = sample_instance(model)
    sq = np.sort(squared_singular_values(cross_cov(inst)))[::-1]
    d_x, d_y = model.dims
    nonzero = sq[: min(cfg.n, d_x, d_y)]
    e2 = edge(ratios) ** 2
    bin_edges = np.linspace(0.0, e2, cfg.grid["bins"] + 1)
    counts, _ = np.histogram(nonzero, bins=bin_edges)
    emp = counts / (min(d_x, d_y) * np.diff(bin_edges))
    theo = binned_density(ratios, bin_edges)
    rows = [[lo, hi, e, t] for lo, hi, e, t in zip(bin_edges[:-1], bin_edges[1:], emp, theo)]
    k = cfg.grid["top_k"] or max(1, 2 * len(cfg.spikes))
    top = np.sqrt(sq[:k])
    preds = predict_outliers(ratios, model.spikes)
    diag = [f"edge={np.sqrt(e2):.12g}", "top singular values: " + " ".join(f"{v:.6g}" for v in top)]
    diag += [f"predicted spike {p.spike_index} {p.branch.value}: {p.position:.6g}" for p in preds]
    return Table(["bin_left", "bin_right", "empirical_density", "theory_density"], rows, diag)


def _top_two(model: ModelConfig) -> np.ndarray:
    return top_svd(cross_cov(sample_instance(model)), 2).values


def _sim_bbp_sweep(cfg: ExperimentConfig, threads: int) -> Table:
    g = cfg.grid
    lams = g["lambdas"] or _linspace(g["lambda_min"], g["lambda_max"], g["points"])
    rows = []
    for lam in lams:
        spike = Spike(lam, lam, g["rho"])
        model = _model(cfg, [spike])
        preds = predict_outliers(model.realized_ratios, [spike])
        emp = np.array(run_trials(model, cfg.trials, _top_two, threads))
        mean, std = emp.mean(axis=0), emp.std(axis=0)
        rows.append([lam, preds[0].position, preds[1].position, mean[0], std[0], mean[1], std[1]])
    cols = ["lambda", "sv1_theory", "sv2_theory", "sv1_emp_mean", "sv1_emp_std", "sv2_emp_mean", "sv2_emp_std"]
    return Table(cols, rows)


def _pls_run(cfg: ExperimentConfig, threads: int) -> Table:
    model = _model(cfg, cfg.spike_objects)
    method, r0 = cfg.grid["method"], cfg.grid["r0"]
    runners = {"mode-a": pls_mode_a, "svd": pls_svd}
    names = ["mode-a", "svd"] if method == "both" else [method]

    def one(m: ModelConfig) -> list[list]:
        inst = sample_instance(m)
        out = []
        for name in names:
            est = runners[name](inst.x_tilde, inst.y_tilde, r0)
            rep = recovery_report(est, inst)
            for step, comp, vx, vy, ux, uy in rep.rows():
                out.append([name, step, comp, vx, vy, ux, uy, est.singular_values[step - 1]])
        return out

    per_trial = run_trials(model, cfg.trials, one, threads)
    rows = [[i, *r] for i, trial_rows in enumerate(per_trial) for r in trial_rows]
    cols = ["trial", "method", "step", "component", "v_x", "v_y", "u_x", "u_y", "singular_value"]
    return Table(cols, rows)


RUNNERS = {
    "theory-bulk": _theory_bulk,
    "theory-outliers": _theory_outliers,
    "theory-overlaps": _theory_overlaps,
    "theory-phase": _theory_phase,
    "sim-spectrum": _sim_spectrum,
    "sim-bbp-sweep": _sim_bbp_sweep,
    "pls-run": _pls_run,
}


# -- output -------------------------------------------------------------------


def format_value(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _json_value(v: Any) -> Any:
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else format_value(v)
    return v


def render(cfg: ExperimentConfig, table: Table) -> str:
    if cfg.format == "json":
        doc = {
            "tool": "xcov",
            "version": __version__,
            "seed": cfg.seed,
            "config": cfg.to_dict(),
            "columns": table.columns,
            "rows": [[_json_value(v) for v in row] for row in table.rows],
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(f"# xcov {__version__}\n# seed: {cfg.seed}\n# config: {cfg.to_json()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def config_from_output(text: str) -> ExperimentConfig:
    """Recover the resolved configuration recorded in an output file."""
    if text.lstrip().startswith("{"):
        return parse_config(json.loads(text)["config"])
    for line in text.splitlines():
        if line.startswith("# config: "):
            return parse_config(json.loads(line[len("# config: "):]))
    raise ConfigError("config", "no configuration header found")


def run(cfg: ExperimentConfig, threads: int = 1) -> Table:
    return RUNNERS[cfg.mode](cfg, threads)


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="xcov", description="Spiked cross-covariance theory and simulation.")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", help="JSON experiment configuration")
    parser.add_argument("--out", help="output path (default: config 'output', else stdout)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo trials")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")

    try:
        if args.config:
            cfg = load_config(args.config, args.mode, args.seed)
        else:
            cfg = parse_config({}, args.mode, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        table = run(cfg, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except XcovError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3

    text = render(cfg, table)
    out = args.out or cfg.output
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for line in table.diagnostics:
        print(line, file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
