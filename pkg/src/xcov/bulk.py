"""Limiting bulk spectrum of the unspiked cross-covariance.

The squared singular values of X^T Y (X, Y pure noise) have a limiting law
mu whose T-transform t(w) solves P(t / alpha_x, w) = 0.  The law is normalized
over the smaller feature dimension (d_x, since alpha_x >= alpha_y); when that
dimension exceeds n only a fraction alpha_x of it is continuous, the rest is
an atom at zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, SolverError
from .polys import AspectRatios, eval_P, p_coeffs, real_roots, tau_plus

EDGE_RTOL = 1e-12
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class BulkLaw:
    ratios: AspectRatios
    sigma_plus: float
    tau_plus: float


@dataclass(frozen=True)
class TTransformPoint:
    z_squared: complex
    t: complex


def spectral_map(ratios: AspectRatios, x):
    """(1 + x)(1 + alpha_x x)(1 + alpha_y x) / x, the squared position for root x.

    Shared by the bulk edge and the outlier positions so both agree exactly.
    """
    a, b = ratios.alpha_x, ratios.alpha_y
    return (1 + x) * (1 + a * x) * (1 + b * x) / x


def edge(ratios: AspectRatios) -> float:
    return float(np.sqrt(spectral_map(ratios, tau_plus(ratios))))


def bulk_law(ratios: AspectRatios) -> BulkLaw:
    tp = tau_plus(ratios)
    return BulkLaw(ratios, float(np.sqrt(spectral_map(ratios, tp))), tp)


def continuous_fraction(ratios: AspectRatios) -> float:
    """Mass of the absolutely continuous part of mu (checked by quadrature in the tests)."""
    return min(1.0, ratios.alpha_x)


def t_of(ratios: AspectRatios, z_squared: float) -> float:
    """Real branch of the T-transform for z_squared at or right of the edge."""
    tp = tau_plus(ratios)
    edge2 = spectral_map(ratios, tp)
    z_squared = float(z_squared)
    if z_squared < edge2:
        if z_squared >= edge2 * (1 - EDGE_RTOL):
            return ratios.alpha_x * tp
        raise DomainError(f"z^2={z_squared!r} lies inside the bulk (edge^2={edge2!r})")
    roots = real_roots(p_coeffs(ratios, z_squared))
    pos = roots[roots > 0.0]
    if pos.size == 0:
        # the two positive roots merge at the edge and may come out complex
        if z_squared <= edge2 * (1 + 1e-8):
            return ratios.alpha_x * tp
        raise SolverError(f"no positive root of P at z^2={z_squared!r}")
    x = min(float(pos[0]), tp)
    return ratios.alpha_x * x


def t_point(ratios: AspectRatios, z_squared: float) -> TTransformPoint:
    return TTransformPoint(z_squared, t_of(ratios, z_squared))


def _t_complex_many(ratios: AspectRatios, w: np.ndarray) -> np.ndarray:
    """Vectorized complex branch: companion eigenvalues, then Newton polish."""
    a, b = ratios.alpha_x, ratios.alpha_y
    w = np.asarray(w, dtype=complex)
    if np.any(w.imag >= 0):
        raise DomainError("t_complex needs Im(w) < 0")
    ab = a * b
    comp = np.zeros(w.shape + (3, 3), dtype=complex)
    comp[..., 0, 0] = -(a + b + ab) / ab
    comp[..., 0, 1] = -(1 + a + b - w) / ab
    comp[..., 0, 2] = -1.0 / ab
    comp[..., 1, 0] = 1.0
    comp[..., 2, 1] = 1.0
    eig = np.linalg.eigvals(comp)
    # Branch selection.  t and g = (1 + t)/w must both be Nevanlinna (Im >= 0),
    # and g is the Stieltjes transform of a probability law on [0, edge^2], so
    # |g| <= 1/dist(w, support).  Far outside the support several roots can
    # pass the sign tests up to rounding; the bound removes the spurious ones.
    t = a * eig
    ww = w[..., None]
    g = (1 + t) / ww
    e2 = spectral_map(ratios, tau_plus(ratios))
    re = w.real
    dist = np.where((re >= 0) & (re <= e2), np.abs(w.imag), np.minimum(np.abs(w), np.abs(w - e2)))
    violation = (
        np.maximum(0.0, -t.imag / np.maximum(np.abs(t), 1e-300))
        + np.maximum(0.0, -g.imag / np.maximum(np.abs(g), 1e-300))
        + np.maximum(0.0, np.abs(1 + t) * dist[..., None] / np.abs(ww) - 1.0)
    )
    idx = np.argmin(violation, axis=-1)
    x = np.take_along_axis(eig, idx[..., None], axis=-1)[..., 0]
    for _ in range(3):
        p = eval_P(ratios, x, w)
        dp = (1 + a + b - w) + 2 * (a + b + ab) * x + 3 * ab * x**2
        x = x - p / dp
    if np.any(x.imag < -1e-12):
        raise SolverError("no root of P in the closed upper half plane")
    res = np.abs(eval_P(ratios, x, w))
    if np.any(res > RESIDUAL_TOL * np.maximum(1.0, np.abs(w * x))):
        raise SolverError(f"T-transform residual too large: {res.max():.3g}")
    return a * x


def t_complex(ratios: AspectRatios, w: complex) -> complex:
    return complex(_t_complex_many(ratios, np.array([w]))[0])


def _density_eps(ratios: AspectRatios, x: np.ndarray, eps: float) -> np.ndarray:
    # g = (1 + t)/w minus the pole (1 - c)/w of the atom at zero, so that the
    # smoothed atom does not leak into the continuous density near x = 0
    w = x - 1j * eps
    g = (continuous_fraction(ratios) + _t_complex_many(ratios, w)) / w
    return g.imag / np.pi


def density(ratios: AspectRatios, x, epsilon: float = 1e-6, richardson: bool = True):
    """Density of the continuous part of mu at x, by Stieltjes inversion.

    Evaluated at x - i epsilon and, by default, Richardson-extrapolated from
    epsilon and epsilon / 2 to cut the smoothing bias at the square-root edge.
    """
    if not 0 < epsilon <= 1e-3:
        raise DomainError(f"epsilon must lie in (0, 1e-3], got {epsilon!r}")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs <= 0):
        raise DomainError("density is evaluated at x > 0 only")
    rho = _density_eps(ratios, xs, epsilon)
    if richardson:
        rho = 2 * _density_eps(ratios, xs, epsilon / 2) - rho
    rho = np.maximum(rho, 0.0)
    return float(rho[0]) if np.ndim(x) == 0 else rho


def binned_density(ratios: AspectRatios, bin_edges) -> np.ndarray:
    """Average of the density over each bin, by adaptive quadrature."""
    bin_edges = np.asarray(bin_edges, dtype=float)
    edge2 = edge(ratios) ** 2
    out = np.empty(bin_edges.size - 1)
    for i, (lo, hi) in enumerate(zip(bin_edges[:-1], bin_edges[1:])):
        lo_c, hi_c = max(lo, 1e-12), min(hi, edge2)
        if hi_c <= lo_c:
            out[i] = 0.0
            continue
        val, _ = integrate.quad(lambda s: density(ratios, s), lo_c, hi_c, limit=200)
        out[i] = val / (hi - lo)
    return out


def continuous_mass(ratios: AspectRatios) -> float:
    """Integral of the density over the support, by quadrature."""
    edge2 = edge(ratios) ** 2
    # split geometrically so the integrable blow-up at zero stays in small pieces
    cuts = [1e-12 * edge2, 1e-8 * edge2, 1e-5 * edge2, 1e-3 * edge2, 0.1 * edge2, edge2]
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        total += integrate.quad(lambda s: density(ratios, s), lo, hi, limit=200)[0]
    return float(total)
