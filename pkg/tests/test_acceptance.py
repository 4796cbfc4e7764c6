"""Acceptance criteria, one test each.

Each test prints a single ``criterion N [PASS|FAIL]`` line through the
``criterion`` fixture and then asserts.  The Monte Carlo criteria are marked
slow; ``pytest -m "not slow"`` runs only the deterministic ones.
"""
import math

import numpy as np
import pytest

from xcov.bulk import binned_density, edge
from xcov.outliers import Branch, b_of, critical_lambda_symmetric, detection_margin, phase_boundary, predict_outliers
from xcov.overlaps import beta_optimal, detection_block, j_func, j_prime, j_prime_fd, overlap_m
from xcov.pls import pls_mode_a, pls_svd, recovery_report
from xcov.polys import AspectRatios, Spike, r_pair, tau_plus
from xcov.sim import (
    ModelConfig,
    cross_cov,
    empirical_overlaps,
    run_trials,
    sample_instance,
    squared_singular_values,
    top_svd,
)

ONE = AspectRatios(1, 1)


def test_criterion_01_root_fixtures(criterion):
    tp = tau_plus(ONE)
    rm, rp = r_pair(Spike(4, 1, 0))
    lc = critical_lambda_symmetric(ONE, 0.0)
    errs = (abs(tp - 0.5), max(abs(rm - 0.25), abs(rp - 1.0)), abs(lc - 2.0))
    ok = errs[0] <= 1e-12 and errs[1] <= 1e-10 and errs[2] <= 1e-8
    criterion(1, "exact root fixtures", ok, f"tau+ err {errs[0]:.1e}, r_pair err {errs[1]:.1e}, lambda_c err {errs[2]:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_02_edge_convergence(criterion):
    cfg = ModelConfig(ONE, n=4000, seed=2)
    tops = run_trials(cfg, 10, lambda c: top_svd(cross_cov(sample_instance(c)), 1).values[0])
    mean = float(np.mean(tops))
    target = edge(cfg.realized_ratios)
    rel = abs(mean - target) / target
    ok = rel < 0.02
    criterion(2, "edge convergence", ok, f"mean top sv {mean:.5f} vs edge {target:.6f}, rel err {rel:.4f} (tol 0.02)")
    assert ok


@pytest.mark.slow
def test_criterion_03_bulk_density(criterion):
    cfg = ModelConfig(ONE, n=2000, seed=3)
    sq = squared_singular_values(cross_cov(sample_instance(cfg)))
    e2 = edge(cfg.realized_ratios) ** 2
    bins = np.linspace(0.0, e2, 41)
    counts, _ = np.histogram(sq, bins=bins)
    emp = counts / (sq.size * np.diff(bins))
    theory = binned_density(cfg.realized_ratios, bins)
    sup = float(np.max(np.abs(emp - theory)))
    ok = sup < 0.05
    criterion(3, "bulk density histogram", ok, f"sup-norm {sup:.4f} over 40 bins (tol 0.05)")
    assert ok


@pytest.mark.slow
def test_criterion_04_bbp_sweep(criterion):
    rho, lams = 0.3, [0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0]
    worst, where = 0.0, None
    for lam in lams:
        cfg = ModelConfig(ONE, (Spike(lam, lam, rho),), n=2000, seed=40)
        r = cfg.realized_ratios
        emp = np.mean(run_trials(cfg, 10, lambda c: top_svd(cross_cov(sample_instance(c)), 2).values), axis=0)
        # one spike: the first value follows the minus branch, the second the plus branch
        preds = {p.branch: p.position for p in predict_outliers(r, cfg.spikes)}
        for k, br in enumerate((Branch.MINUS, Branch.PLUS)):
            err = abs(emp[k] - preds[br]) / preds[br]
            if err > worst:
                worst, where = err, (lam, br.value)
    ok = worst < 0.03
    criterion(4, "BBP sweep", ok, f"worst rel err {worst:.4f} at lambda={where[0]} {where[1]} (tol 0.03)")
    assert ok


OVERLAP_POINTS = [
    ((1, 1), (6, 6, 0.6), (Branch.MINUS,)),
    ((2, 0.5), (5, 2, 0.7), (Branch.MINUS,)),
    ((1, 0.5), (2, 6, 0.5), (Branch.MINUS,)),
    ((1, 1), (20, 20, 0.3), (Branch.MINUS, Branch.PLUS)),
    ((4, 1), (3, 3, 0.8), (Branch.MINUS,)),
]


def _mean_overlaps(cfg: ModelConfig, k: int, trials: int):
    def one(c):
        inst = sample_instance(c)
        ox, oy = empirical_overlaps(inst, top_svd(cross_cov(inst), k))
        return ox[:, 0], oy[:, 0]

    res = run_trials(cfg, trials, one)
    return np.mean([r[0] for r in res], axis=0), np.mean([r[1] for r in res], axis=0)


@pytest.mark.slow
def test_criterion_05_overlap_theory(criterion):
    worst, lines = 0.0, []
    for alpha, spike, branches in OVERLAP_POINTS:
        s = Spike(*spike)
        cfg = ModelConfig(AspectRatios(*alpha), (s,), n=4000, seed=50)
        r = cfg.realized_ratios
        ox, oy = _mean_overlaps(cfg, len(branches), 10)
        for k, br in enumerate(branches):
            m = overlap_m(r, s, br)
            err = max(abs(ox[k] - m.m_x), abs(oy[k] - m.m_y))
            worst = max(worst, err)
            lines.append(f"{alpha}{spike}{br.value}: emp ({ox[k]:.3f},{oy[k]:.3f}) theory ({m.m_x:.3f},{m.m_y:.3f})")
    ok = worst < 0.05
    criterion(5, "overlap theory", ok, f"worst abs err {worst:.4f} (tol 0.05); " + "; ".join(lines))
    assert ok


NULL_POINTS = [
    ((1, 1), (1.0, 1.0, 0.3)),
    ((1, 1), (0.8, 0.8, 0.5)),
    ((2, 0.5), (1.0, 1.0, 0.2)),
    ((1, 0.5), (0.5, 1.2, 0.2)),
    ((4, 1), (0.5, 0.5, 0.6)),
]


@pytest.mark.slow
def test_criterion_06_null_regime(criterion):
    worst, margins = 0.0, []
    for alpha, spike in NULL_POINTS:
        s = Spike(*spike)
        cfg = ModelConfig(AspectRatios(*alpha), (s,), n=4000, seed=60)
        margins.append(detection_margin(cfg.realized_ratios, s))

        def one(c):
            inst = sample_instance(c)
            ox, oy = empirical_overlaps(inst, top_svd(cross_cov(inst), 1))
            return max(ox[0, 0], oy[0, 0])

        worst = max(worst, max(run_trials(cfg, 2, one)))
    undetectable = all(m < 0 for m in margins)
    ok = undetectable and worst < 0.1
    criterion(6, "null regime", ok, f"max top-vector overlap {worst:.4f} (tol 0.1); all margins negative: {undetectable}")
    assert ok


@pytest.mark.slow
def test_criterion_07_pls_threshold(criterion):
    """Weak-recovery onset: first grid lambda whose mean squared loading overlap reaches 0.1."""
    rho, step = 0.5, 0.05
    lam_c = critical_lambda_symmetric(ONE, rho)
    grid = np.round(np.arange(0.80, 1.60 + 1e-9, step), 2)
    onset = {"mode-a": None, "svd": None}
    for lam in grid:
        cfg = ModelConfig(ONE, (Spike(lam, lam, rho),), n=4000, seed=70)

        def one(c):
            inst = sample_instance(c)
            return [recovery_report(m(inst.x_tilde, inst.y_tilde, 1), inst).v_x[0, 0] for m in (pls_mode_a, pls_svd)]

        means = np.mean(run_trials(cfg, 2, one), axis=0)
        for name, v in zip(("mode-a", "svd"), means):
            if onset[name] is None and v >= 0.1:
                onset[name] = float(lam)
        if all(v is not None for v in onset.values()):
            break
    # the detection margin changes sign at lam_c on the symmetric line
    margin_lo = detection_margin(ONE, Spike(lam_c - 1e-6, lam_c - 1e-6, rho))
    margin_hi = detection_margin(ONE, Spike(lam_c + 1e-6, lam_c + 1e-6, rho))
    gaps = {k: (abs(v - lam_c) if v is not None else math.inf) for k, v in onset.items()}
    ok = margin_lo < 0 < margin_hi and all(g <= step for g in gaps.values())
    detail = f"margin sign change at {lam_c:.4f}; onset mode-a {onset['mode-a']}, svd {onset['svd']} (tol {step})"
    criterion(7, "PLS threshold", ok, detail)
    assert ok


ROTATION_POINTS = [((1, 1), (20, 20, 0.3)), ((1, 1), (12, 12, 0.2)), ((2, 0.5), (15, 10, 0.2))]


@pytest.mark.slow
def test_criterion_08_rotation_dominance(criterion):
    ok, lines = True, []
    for alpha, spike in ROTATION_POINTS:
        s = Spike(*spike)
        cfg = ModelConfig(AspectRatios(*alpha), (s,), n=4000, seed=80)
        r = cfg.realized_ratios
        mm, mp = overlap_m(r, s, Branch.MINUS), overlap_m(r, s, Branch.PLUS)
        plans = [beta_optimal(mm.m_x, mp.m_x), beta_optimal(mm.m_y, mp.m_y)]
        ok &= all(p.q_opt > max(a, b) for p, (a, b) in zip(plans, [(mm.m_x, mp.m_x), (mm.m_y, mp.m_y)]))

        def one(c):
            inst = sample_instance(c)
            trip = top_svd(cross_cov(inst), 2)
            out = []
            for vecs, planted, plan in ((trip.left, inst.v_x[:, 0], plans[0]), (trip.right, inst.v_y[:, 0], plans[1])):
                # align each branch vector with the planted signal before mixing
                signs = np.sign(vecs.T @ planted)
                est = plan.beta_opt * signs[0] * vecs[:, 0] + math.sqrt(1 - plan.beta_opt**2) * signs[1] * vecs[:, 1]
                branch = (vecs.T @ planted) ** 2
                out += [float((est @ planted) ** 2), float(branch.max())]
            return out

        rot_x, best_x, rot_y, best_y = np.mean(run_trials(cfg, 3, one), axis=0)
        ok &= rot_x >= best_x - 0.02 and rot_y >= best_y - 0.02
        lines.append(f"{alpha}{spike}: rotated ({rot_x:.3f},{rot_y:.3f}) vs best branch ({best_x:.3f},{best_y:.3f})")
    criterion(8, "rotation dominance", ok, "; ".join(lines))
    assert ok


def test_criterion_09_property_suites(criterion):
    rng = np.random.default_rng(9)
    fails = []
    # r- falls and r+ rises as rho^2 grows
    for _ in range(1000):
        lx, ly = rng.uniform(0.1, 40, 2)
        r1, r2 = np.sort(rng.uniform(0, 0.95, 2) ** 2)
        a, b = r_pair(Spike(lx, ly, math.sqrt(r1))), r_pair(Spike(lx, ly, math.sqrt(r2)))
        if r2 - r1 < 1e-9:
            continue
        if not (b[0] <= a[0] * (1 + 1e-9) and b[1] >= a[1] * (1 - 1e-9)):
            fails.append("monotonicity")
            break
    det_worst = fd_worst = 0.0
    for _ in range(300):
        r = AspectRatios(*rng.uniform(0.1, 10, 2))
        s = Spike(*rng.uniform(0.1, 40, 2), rng.uniform(-0.95, 0.95))
        z = rng.uniform(1.01, 5) * edge(r)
        j = j_func(r, s, z)
        det = np.linalg.det(detection_block(r, s, z)) * r.alpha_x**2 / (s.lambda_x * s.lambda_y)
        if abs(j) > 1e-6:
            det_worst = max(det_worst, abs(det - j) / abs(j))
        jp = j_prime(r, s, z)
        if abs(jp) > 1e-6:
            fd_worst = max(fd_worst, abs(j_prime_fd(r, s, z) - jp) / abs(jp))
    if det_worst > 1e-8:
        fails.append("determinant")
    if fd_worst > 1e-5:
        fails.append("derivative")
    # b is non-increasing in r and continuous at tau+
    for alpha in [(1, 1), (2, 0.5), (0.3, 4)]:
        r = AspectRatios(*alpha)
        tp = tau_plus(r)
        xs = np.linspace(0.01, 2 * tp, 400)
        bs = np.array([b_of(r, x) for x in xs])
        if np.any(np.diff(bs) > 1e-12 * bs[:-1]):
            fails.append(f"b monotone {alpha}")
        if abs(b_of(r, tp * (1 - 1e-9)) - edge(r)) > 1e-6 * edge(r) or b_of(r, tp * (1 + 1e-9)) != edge(r):
            fails.append(f"b continuity {alpha}")
    ok = not fails
    criterion(9, "property suites", ok, f"det rel err {det_worst:.1e}, j' rel err {fd_worst:.1e}, failures {fails or 'none'}")
    assert ok


def test_criterion_10_phase_shape(criterion):
    grid = list(np.linspace(0.1, 4.0, 40))
    lc = 1 / tau_plus(ONE)
    flat = phase_boundary(ONE, 0.0, grid)
    l_err = max(abs(ly - (lc if lx < lc else 0.0)) for lx, ly in flat)
    curves = [np.array([ly for _, ly in phase_boundary(ONE, math.sqrt(r2), grid)]) for r2 in (0.0, 0.25, 0.5, 0.81)]
    monotone = all(np.all(b <= a + 1e-9) for a, b in zip(curves, curves[1:]))
    ok = l_err <= 1e-6 and monotone
    criterion(10, "phase boundary shape", ok, f"L-curve max err {l_err:.1e}; non-increasing in rho^2: {monotone}")
    assert ok
