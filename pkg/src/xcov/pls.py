"""Partial least squares on a pair of data matrices: mode-A (with deflation) and PLS-SVD."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegenerateInputError, DomainError
from .sim import ModelInstance, top_svd


@dataclass
class PlsEstimates:
    """Per-step estimates stored as columns (step s is column s - 1)."""

    method: str
    u_hat_x: np.ndarray  # n x r0
    u_hat_y: np.ndarray
    v_hat_x: np.ndarray  # d_x x r0
    v_hat_y: np.ndarray  # d_y x r0
    singular_values: np.ndarray

    @property
    def steps(self) -> int:
        return self.singular_values.size


@dataclass
class RecoveryReport:
    """Squared normalized overlaps, shape (steps, planted components)."""

    method: str
    v_x: np.ndarray
    v_y: np.ndarray
    u_x: np.ndarray
    u_y: np.ndarray

    def rows(self):
        steps, comps = self.v_x.shape
        for s in range(steps):
            for k in range(comps):
                yield s + 1, k + 1, self.v_x[s, k], self.v_y[s, k], self.u_x[s, k], self.u_y[s, k]


def _check_rank(x: np.ndarray, y: np.ndarray, r0: int) -> None:
    if x.shape[0] != y.shape[0]:
        raise DomainError(f"sample dimensions differ: {x.shape[0]} vs {y.shape[0]}")
    if not 1 <= r0 <= min(x.shape[1], y.shape[1]):
        raise DomainError(f"r0={r0} must lie in [1, {min(x.shape[1], y.shape[1])}]")


def _top_triplet(x: np.ndarray, y: np.ndarray, step: int):
    try:
        trip = top_svd(x.T @ y, 1)
    except ConvergenceError as exc:
        raise ConvergenceError(str(exc), step=step) from exc
    return trip.left[:, 0], trip.right[:, 0], float(trip.values[0])


def pls_mode_a(x_tilde: np.ndarray, y_tilde: np.ndarray, r0: int) -> PlsEstimates:
    """Canonical PLS: top pair of the current cross product, regress, deflate, repeat."""
    x = np.array(x_tilde, dtype=float, copy=True)
    y = np.array(y_tilde, dtype=float, copy=True)
    _check_rank(x, y, r0)
    n, d_x, d_y = x.shape[0], x.shape[1], y.shape[1]
    ux, uy = np.empty((n, r0)), np.empty((n, r0))
    vx, vy = np.empty((d_x, r0)), np.empty((d_y, r0))
    sv = np.empty(r0)
    for s in range(r0):
        a, b, sv[s] = _top_triplet(x, y, s + 1)
        ux[:, s] = x @ a
        uy[:, s] = y @ b
        nx, ny = ux[:, s] @ ux[:, s], uy[:, s] @ uy[:, s]
        if nx == 0.0 or ny == 0.0:
            raise DegenerateInputError(f"step {s + 1}: latent score vector is zero")
        vx[:, s] = x.T @ ux[:, s] / nx
        vy[:, s] = y.T @ uy[:, s] / ny
        x -= np.outer(ux[:, s], vx[:, s])
        y -= np.outer(uy[:, s], vy[:, s])
    return PlsEstimates("mode-a", ux, uy, vx, vy, sv)


def pls_svd(x_tilde: np.ndarray, y_tilde: np.ndarray, r0: int) -> PlsEstimates:
    """PLS-SVD: loadings are the top-r0 singular vectors of X^T Y, scores their projections."""
    x = np.asarray(x_tilde, dtype=float)
    y = np.asarray(y_tilde, dtype=float)
    _check_rank(x, y, r0)
    trip = top_svd(x.T @ y, r0)
    return PlsEstimates("svd", x @ trip.left, y @ trip.right, trip.left.copy(), trip.right.copy(), trip.values)


def _normalized_sq(est: np.ndarray, planted: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(est, axis=0)
    pn = np.linalg.norm(planted, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (est.T @ planted) ** 2 / np.outer(norms**2, pn**2)
    return np.nan_to_num(out)


def recovery_report(estimates: PlsEstimates, instance: ModelInstance) -> RecoveryReport:
    return RecoveryReport(
        estimates.method,
        _normalized_sq(estimates.v_hat_x, instance.v_x),
        _normalized_sq(estimates.v_hat_y, instance.v_y),
        _normalized_sq(estimates.u_hat_x, instance.u_x),
        _normalized_sq(estimates.u_hat_y, instance.u_y),
    )
