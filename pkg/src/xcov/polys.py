"""The three cubics behind the asymptotic theory, and a robust real-root finder.

Conventions
-----------
Aspect ratios are *samples per feature*: ``alpha_x = n / d_x`` and
``alpha_y = n / d_y``.  This was calibrated against simulation (see
``tests/test_bulk.py::test_aspect_ratio_convention``); the reciprocal reading
misplaces the bulk edge by tens of percent at asymmetric shapes.

``AspectRatios`` always stores the larger ratio in ``alpha_x``.  When the user
supplied them the other way round the ``swapped`` flag is set, and callers that
report channel-labelled quantities use it to map results back.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DomainError, SolverError

CLUSTER_RTOL = 1e-7


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise DomainError(f"{name} must be a finite positive number, got {value!r}")
    return value


@dataclass(frozen=True)
class AspectRatios:
    alpha_x: float
    alpha_y: float
    swapped: bool = False

    def __post_init__(self):
        ax = _positive("alpha_x", self.alpha_x)
        ay = _positive("alpha_y", self.alpha_y)
        swapped = bool(self.swapped)
        if ax < ay:
            ax, ay, swapped = ay, ax, not swapped
        object.__setattr__(self, "alpha_x", ax)
        object.__setattr__(self, "alpha_y", ay)
        object.__setattr__(self, "swapped", swapped)

    @classmethod
    def from_dims(cls, n: int, d_x: int, d_y: int) -> "AspectRatios":
        return cls(n / d_x, n / d_y)

    def user_order(self) -> tuple[float, float]:
        """Ratios in the order the caller originally gave them."""
        if self.swapped:
            return self.alpha_y, self.alpha_x
        return self.alpha_x, self.alpha_y

    def dims(self, n: int) -> tuple[int, int]:
        """Feature dimensions (d_x, d_y), user order, for ``n`` samples."""
        ax, ay = self.user_order()
        return max(1, round(n / ax)), max(1, round(n / ay))


@dataclass(frozen=True)
class Spike:
    lambda_x: float
    lambda_y: float
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "lambda_x", _positive("lambda_x", self.lambda_x))
        object.__setattr__(self, "lambda_y", _positive("lambda_y", self.lambda_y))
        rho = float(self.rho)
        if not math.isfinite(rho) or abs(rho) >= 1.0:
            raise DomainError(f"rho must lie in (-1, 1), got {rho!r}")
        object.__setattr__(self, "rho", rho)

    def swapped(self) -> "Spike":
        return Spike(self.lambda_y, self.lambda_x, self.rho)

    def oriented(self, ratios: AspectRatios) -> "Spike":
        """The spike expressed in the canonical channel order of ``ratios``."""
        return self.swapped() if ratios.swapped else self


@dataclass(frozen=True)
class CubicCoeffs:
    """c0 + c1 x + c2 x^2 + c3 x^3.  Set ``allow_degenerate`` to permit c3 == 0."""

    c0: float
    c1: float
    c2: float
    c3: float
    allow_degenerate: bool = False

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise DomainError(f"non-finite coefficient in {vals}")
        if self.c3 == 0.0 and not self.allow_degenerate:
            raise DegenerateInputError("leading coefficient is zero; pass allow_degenerate=True")

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2, self.c3], dtype=float)

    def __call__(self, x):
        return ((self.c3 * x + self.c2) * x + self.c1) * x + self.c0


def eval_P(ratios: AspectRatios, x, z):
    a, b = ratios.alpha_x, ratios.alpha_y
    return 1 + (1 + a + b - z) * x + (a + b + a * b) * x**2 + a * b * x**3


def eval_Q(ratios: AspectRatios, x):
    a, b = ratios.alpha_x, ratios.alpha_y
    return 1 - (a * b + a + b) * x**2 - 2 * a * b * x**3


def p_coeffs(ratios: AspectRatios, z: float) -> CubicCoeffs:
    a, b = ratios.alpha_x, ratios.alpha_y
    return CubicCoeffs(1.0, 1 + a + b - z, a + b + a * b, a * b)


def q_coeffs(ratios: AspectRatios) -> CubicCoeffs:
    a, b = ratios.alpha_x, ratios.alpha_y
    return CubicCoeffs(1.0, 0.0, -(a * b + a + b), -2 * a * b)


def r_coeffs(spike: Spike) -> CubicCoeffs:
    """Outlier cubic, factored as (1 + x) * [(1 - lx x)(1 - ly x) - rho^2 lx ly x (1 + x)].

    The bracket is the detection determinant with the channel coupling kept
    (the coupling resolvent entry tends to rho * tau, not zero).  At rho = 0 it
    coincides with the naive (1 + x)(1 - lx x)(1 - ly x).
    """
    lx, ly, r2 = spike.lambda_x, spike.lambda_y, spike.rho**2
    ll = lx * ly
    return CubicCoeffs(1.0, 1 - lx - ly - r2 * ll, ll * (1 - 2 * r2) - lx - ly, ll * (1 - r2))


def printed_r_coeffs(spike: Spike) -> CubicCoeffs:
    """The uncorrected outlier cubic (drops the channel coupling); kept for comparison only."""
    lx, ly, r2 = spike.lambda_x, spike.lambda_y, spike.rho**2
    ll = lx * ly
    return CubicCoeffs(1.0, 1 - r2 * ll - lx - ly, ll - lx - ly, ll)


def eval_R(spike: Spike, x):
    return r_coeffs(spike)(x)


def eval_R_printed(spike: Spike, x):
    return printed_r_coeffs(spike)(x)


def _newton(poly: np.poly1d, x: float, iters: int = 30) -> float:
    """Newton iteration on a real polynomial, keeping the best iterate."""
    dpoly = poly.deriv()
    best, best_res = x, abs(poly(x))
    for _ in range(iters):
        d = dpoly(x)
        if d == 0.0 or best_res == 0.0:
            break
        step = poly(x) / d
        x = x - step
        res = abs(poly(x))
        if res < best_res:
            best, best_res = x, res
        if abs(step) <= 2 * np.finfo(float).eps * max(1.0, abs(x)):
            break
    return float(best)


def residual_scale(coeffs: CubicCoeffs) -> float:
    return max(1.0, float(np.max(np.abs(coeffs.as_array()))))


def real_roots(coeffs: CubicCoeffs) -> np.ndarray:
    """All real roots, ascending, with multiplicity.

    Roots come from companion-matrix eigenvalues, then Newton polishing.
    Eigenvalues closer than 1e-7 (relative) are merged into a multiple root,
    which is polished as a critical point of the polynomial instead.  A
    near-real conjugate pair is kept as a double root only when the polished
    critical point is a genuine root to working precision.
    """
    c = coeffs.as_array()
    if c[1] == 0.0 and c[2] == 0.0 and c[3] == 0.0:
        raise DegenerateInputError("polynomial has no variable terms")
    deg = int(np.max(np.nonzero(c)[0]))
    poly = np.poly1d(c[: deg + 1][::-1])
    eig = np.roots(poly.coeffs)
    tol = residual_scale(coeffs) * 1e-12

    cands = sorted(float(e.real) for e in eig if abs(e.imag) <= CLUSTER_RTOL * max(1.0, abs(e)))
    groups: list[list[float]] = []
    for x in cands:
        if groups and abs(x - groups[-1][-1]) <= CLUSTER_RTOL * max(abs(x), abs(groups[-1][-1]), 1e-300):
            groups[-1].append(x)
        else:
            groups.append([x])

    out: list[float] = []
    for grp in groups:
        mult = len(grp)
        x0 = float(np.mean(grp))
        if mult == 1:
            out.append(_newton(poly, x0))
            continue
        # multiple root: it is a root of the (mult-1)-th derivative too
        x = _newton(poly.deriv(mult - 1), x0)
        if abs(poly(x)) > tol * max(1.0, abs(x)) ** deg:
            # conjugate pair that only looked real; no real root here
            continue
        out.extend([x] * mult)
    return np.array(sorted(out))


def _positive_roots(coeffs: CubicCoeffs) -> np.ndarray:
    roots = real_roots(coeffs)
    return roots[roots > 0.0]


def tau_plus(ratios: AspectRatios) -> float:
    """Unique positive root of Q."""
    pos = _positive_roots(q_coeffs(ratios))
    if pos.size != 1:
        raise SolverError(f"expected one positive root of Q, found {pos.tolist()}")
    return float(pos[0])


def r_pair(spike: Spike) -> tuple[float, float]:
    """The two positive roots (r_minus, r_plus) of the outlier cubic."""
    pos = _positive_roots(r_coeffs(spike))
    if pos.size != 2:
        raise SolverError(f"expected two positive roots of R for {spike}, found {pos.tolist()}")
    return float(pos[0]), float(pos[1])


def is_double(r_minus: float, r_plus: float) -> bool:
    return r_plus - r_minus <= CLUSTER_RTOL * max(abs(r_plus), 1e-300)
