"""Outlier singular values: positions, detectability and phase boundaries."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import optimize

from .bulk import spectral_map
from .errors import BracketError, DomainError
from .polys import AspectRatios, Spike, r_pair, tau_plus

LAMBDA_MIN, LAMBDA_MAX = 1e-6, 1e6


class Branch(str, Enum):
    MINUS = "minus"
    PLUS = "plus"

    @property
    def order(self) -> int:
        return 0 if self is Branch.MINUS else 1


@dataclass(frozen=True)
class OutlierPrediction:
    spike_index: int
    branch: Branch
    r_value: float
    position: float
    detectable: bool


def b_of(ratios: AspectRatios, r: float) -> float:
    """Limiting singular value attached to root r; clamps to the edge past tau_plus."""
    r = float(r)
    if not r > 0:
        raise DomainError(f"r must be positive, got {r!r}")
    tp = tau_plus(ratios)
    return float(np.sqrt(spectral_map(ratios, min(r, tp))))


def predict_outliers(ratios: AspectRatios, spikes: Sequence[Spike]) -> list[OutlierPrediction]:
    tp = tau_plus(ratios)
    preds = []
    for k, spike in enumerate(spikes, start=1):
        for branch, r in zip((Branch.MINUS, Branch.PLUS), r_pair(spike)):
            preds.append(OutlierPrediction(k, branch, r, b_of(ratios, r), r <= tp))
    # stable sort, so ties keep (spike_index, branch) order
    return sorted(preds, key=lambda p: (-p.position, p.spike_index, p.branch.order))


def detection_margin(ratios: AspectRatios, spike: Spike) -> float:
    return tau_plus(ratios) - r_pair(spike)[0]


def critical_lambda_symmetric(ratios: AspectRatios, rho: float) -> float:
    """Smallest common SNR lambda_x = lambda_y = lambda at which the top outlier detaches."""

    def margin(lam: float) -> float:
        return detection_margin(ratios, Spike(lam, lam, rho))

    lo, hi = LAMBDA_MIN, LAMBDA_MAX
    if margin(lo) >= 0 or margin(hi) < 0:
        raise BracketError(f"no sign change of the detection margin on [{lo}, {hi}] at rho={rho}")
    return float(optimize.brentq(margin, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500))


def _boundary_point(ratios: AspectRatios, rho: float, lambda_x: float) -> float:
    def margin(ly: float) -> float:
        return detection_margin(ratios, Spike(lambda_x, ly, rho))

    lo = LAMBDA_MIN
    if margin(lo) >= 0:
        return 0.0
    hi = 1.0
    while margin(hi) < 0:
        if hi >= LAMBDA_MAX:
            return math.inf
        lo, hi = hi, min(hi * 10.0, LAMBDA_MAX)
    return float(optimize.brentq(margin, lo, hi, xtol=1e-10, rtol=1e-12, maxiter=500))


def phase_boundary(ratios: AspectRatios, rho: float, lambda_x_grid: Sequence[float]) -> list[tuple[float, float]]:
    """For each lambda_x, the smallest lambda_y giving detection.

    0.0 means any lambda_y > 0 works; ``inf`` means no lambda_y up to 1e6 does.
    """
    grid = [float(v) for v in lambda_x_grid]
    if not grid:
        raise DomainError("lambda_x grid is empty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise DomainError("lambda_x grid must be ascending")
    return [(lx, _boundary_point(ratios, rho, lx)) for lx in grid]

