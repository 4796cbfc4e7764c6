"""Finite-size Monte Carlo for the spiked cross-covariance model.

    X~ = X + sum_k sqrt(lx_k) u_x,k v_x,k^T      (n x d_x)
    Y~ = Y + sum_k sqrt(ly_k) u_y,k v_y,k^T      (n x d_y)

with i.i.d. N(0, 1/d) noise, unit planted vectors, and <u_x,k, u_y,k> ~ rho_k.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, TypeVar

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, svds

from .errors import ConvergenceError, DomainError
from .outliers import OutlierPrediction
from .polys import AspectRatios, Spike

T = TypeVar("T")

DENSE_SVD_MAX = 600


@dataclass(frozen=True)
class ModelConfig:
    ratios: AspectRatios
    spikes: tuple[Spike, ...] = ()
    n: int = 1000
    seed: int = 0
    noise_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "spikes", tuple(self.spikes))
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        d_x, d_y = self.dims
        if len(self.spikes) > min(d_x, d_y) / 10:
            raise DomainError(f"{len(self.spikes)} spikes is too many for dimensions {(d_x, d_y)}")

    @property
    def dims(self) -> tuple[int, int]:
        return self.ratios.dims(self.n)

    @property
    def realized_ratios(self) -> AspectRatios:
        """The ratios n/d actually simulated; theory comparisons should use these."""
        d_x, d_y = self.dims
        return AspectRatios.from_dims(self.n, d_x, d_y)


@dataclass
class ModelInstance:
    x_tilde: np.ndarray
    y_tilde: np.ndarray
    u_x: np.ndarray  # n x r, one column per spike
    u_y: np.ndarray
    v_x: np.ndarray  # d_x x r
    v_y: np.ndarray  # d_y x r


@dataclass(frozen=True)
class SvdTriplets:
    values: np.ndarray
    left: np.ndarray  # columns
    right: np.ndarray


@dataclass
class EmpiricalSpectrum:
    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray
    histogram: tuple[np.ndarray, np.ndarray] | None = None


@dataclass(frozen=True)
class OutlierMatch:
    prediction: OutlierPrediction
    empirical_index: int
    empirical_value: float
    abs_gap: float
    rel_gap: float


@dataclass
class Pairing:
    pairs: list[OutlierMatch] = field(default_factory=list)
    unmatched: list[OutlierPrediction] = field(default_factory=list)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def sample_instance(config: ModelConfig) -> ModelInstance:
    rng = np.random.default_rng(int(config.seed))
    n = config.n
    d_x, d_y = config.dims
    r = len(config.spikes)
    x = rng.standard_normal((n, d_x)) * (config.noise_scale / math.sqrt(d_x))
    y = rng.standard_normal((n, d_y)) * (config.noise_scale / math.sqrt(d_y))
    u_x, u_y = np.empty((n, r)), np.empty((n, r))
    v_x, v_y = np.empty((d_x, r)), np.empty((d_y, r))
    for k, spike in enumerate(config.spikes):
        v_x[:, k] = _unit(rng.standard_normal(d_x))
        v_y[:, k] = _unit(rng.standard_normal(d_y))
        g = rng.standard_normal(n)
        w = rng.standard_normal(n)
        u_x[:, k] = _unit(g)
        u_y[:, k] = _unit(spike.rho * g + math.sqrt(1 - spike.rho**2) * w)
        x += math.sqrt(spike.lambda_x) * np.outer(u_x[:, k], v_x[:, k])
        y += math.sqrt(spike.lambda_y) * np.outer(u_y[:, k], v_y[:, k])
    return ModelInstance(x, y, u_x, u_y, v_x, v_y)


def cross_cov(instance: ModelInstance) -> np.ndarray:
    return instance.x_tilde.T @ instance.y_tilde


def fix_signs(left: np.ndarray, right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip each pair so the largest-magnitude entry of the left vector is positive."""
    idx = np.argmax(np.abs(left), axis=0)
    s = np.sign(left[idx, np.arange(left.shape[1])])
    s[s == 0] = 1.0
    return left * s, right * s


def top_svd(matrix: np.ndarray, k: int) -> SvdTriplets:
    """Top-k singular triplets, descending; dense LAPACK for small inputs, ARPACK otherwise."""
    matrix = np.asarray(matrix, dtype=float)
    m = min(matrix.shape)
    if not 1 <= k <= m:
        raise DomainError(f"k={k} must lie in [1, {m}]")
    if m <= DENSE_SVD_MAX or k >= m // 4:
        try:
            u, s, vt = np.linalg.svd(matrix, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(str(exc)) from exc
        u, s, v = u[:, :k], s[:k], vt[:k].T
    else:
        v0 = np.ones(m) / math.sqrt(m)
        try:
            u, s, vt = svds(matrix, k=k, v0=v0, tol=0, which="LM", solver="arpack")
        except ArpackNoConvergence as exc:
            raise ConvergenceError(f"ARPACK did not converge for k={k}") from exc
        order = np.argsort(s)[::-1]
        u, s, v = u[:, order], s[order], vt[order].T
    u, v = fix_signs(u, v)
    return SvdTriplets(s.copy(), u, v)


def squared_singular_values(matrix: np.ndarray) -> np.ndarray:
    return np.linalg.svd(matrix, compute_uv=False) ** 2


def empirical_spectrum(instance: ModelInstance, k: int, bins: int | np.ndarray | None = None) -> EmpiricalSpectrum:
    """Top-k triplets; with ``bins`` also a histogram of all squared singular values."""
    s = cross_cov(instance)
    trip = top_svd(s, k)
    hist = None
    if bins is not None:
        counts, bin_edges = np.histogram(squared_singular_values(s), bins=bins)
        hist = (bin_edges, counts)
    return EmpiricalSpectrum(trip.values, trip.left, trip.right, hist)


def empirical_overlaps(instance: ModelInstance, triplets: SvdTriplets) -> tuple[np.ndarray, np.ndarray]:
    """Squared overlaps, shape (k triplets, r spikes): left vs v_x and right vs v_y."""
    return (triplets.left.T @ instance.v_x) ** 2, (triplets.right.T @ instance.v_y) ** 2


def match_outliers(predicted: Sequence[OutlierPrediction], empirical: Sequence[float]) -> Pairing:
    """Greedy pairing of detectable predictions with empirical top values, closest pairs first."""
    emp = np.asarray(empirical, dtype=float)
    preds = [p for p in predicted if p.detectable]
    cands = sorted(
        (abs(p.position - e), i, j) for i, p in enumerate(preds) for j, e in enumerate(emp)
    )
    used_p, used_e = set(), set()
    pairs = []
    for gap, i, j in cands:
        if i in used_p or j in used_e:
            continue
        used_p.add(i)
        used_e.add(j)
        p = preds[i]
        pairs.append(OutlierMatch(p, j, float(emp[j]), float(gap), float(gap / p.position)))
    pairs.sort(key=lambda m: m.empirical_index)
    return Pairing(pairs, [p for i, p in enumerate(preds) if i not in used_p])


def trial_seed(seed: int, trial: int) -> int:
    """Independent 64-bit seed for one trial of a multi-trial experiment."""
    ss = np.random.SeedSequence([int(seed), int(trial)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_trials(config: ModelConfig, trials: int, fn: Callable[[ModelConfig], T], threads: int = 1) -> list[T]:
    """Apply ``fn`` to ``trials`` reseeded copies of ``config``; results in trial order."""
    configs = [replace(config, seed=trial_seed(config.seed, i)) for i in range(trials)]
    if threads <= 1:
        return [fn(c) for c in configs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, configs))
