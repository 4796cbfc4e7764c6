"""Limiting squared overlaps between outlier singular vectors and planted signals.

Everything is evaluated in the canonical channel order (alpha_x >= alpha_y).
Functions taking a user-facing ``Spike`` orient it first and map channel
labelled outputs (f1/f3, m_x/m_y) back to the caller's order.

Notation: t is the real T-transform branch at z^2 and tau = t / alpha_x.  The
resolvent limits are

    h1 = (1 + t) / z           h2 = z t / (alpha_x + alpha_y t)
    h3 = (alpha_x + alpha_y t) / (alpha_x z)      h4 = z t / (alpha_x (1 + t))

and the (2, 4) coupling between the two sample-side directions tends to
rho * tau.  Keeping that coupling produces the (1 + tau)^2 factor in j below.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .bulk import edge, t_of
from .errors import ConsistencyError, DegenerateInputError, DomainError
from .outliers import Branch, b_of
from .polys import AspectRatios, Spike, eval_Q, is_double, r_pair, tau_plus

log = logging.getLogger(__name__)

FD_RTOL = 1e-5
CLAMP_TOL = 1e-6


@dataclass(frozen=True)
class HValues:
    h1: float
    h2: float
    h3: float
    h4: float


@dataclass(frozen=True)
class OverlapPrediction:
    spike_index: int
    branch: Branch
    m_x: float
    m_y: float


@dataclass(frozen=True)
class RotationPlan:
    beta_opt: float
    q_opt: float


def _check_outside(ratios: AspectRatios, z: float) -> float:
    z = float(z)
    if not z > edge(ratios):
        raise DomainError(f"z={z!r} is not right of the bulk edge {edge(ratios)!r}")
    return z


def h_values(ratios: AspectRatios, z: float) -> HValues:
    z = _check_outside(ratios, z)
    a, b = ratios.alpha_x, ratios.alpha_y
    t = t_of(ratios, z * z)
    return HValues((1 + t) / z, z * t / (a + b * t), (a + b * t) / (a * z), z * t / (a * (1 + t)))


def _envelope(a: float, b: float, tau: float) -> float:
    return (1 + tau) ** 2 * (1 + a * tau) * (1 + b * tau)


def _j(a: float, b: float, s: Spike, z: float, tau: float) -> float:
    return a * a * ((tau - 1 / s.lambda_x) * (tau - 1 / s.lambda_y) - s.rho**2 * _envelope(a, b, tau) / z**2)


def j_func(ratios: AspectRatios, spike: Spike, z: float) -> float:
    """(t - a/lx)(t - a/ly) - rho^2 (a + t)^2 (1 + t)(a + b t) / (a z^2), a = alpha_x, b = alpha_y."""
    z = _check_outside(ratios, z)
    s = spike.oriented(ratios)
    a = ratios.alpha_x
    return _j(a, ratios.alpha_y, s, z, t_of(ratios, z * z) / a)


def _j_prime(ratios: AspectRatios, s: Spike, z: float, tau: float) -> float:
    a, b = ratios.alpha_x, ratios.alpha_y
    env = _envelope(a, b, tau)
    d_env = env * (2 / (1 + tau) + a / (1 + a * tau) + b / (1 + b * tau))
    r2 = s.rho**2
    dj_dz = 2 * r2 * env / z**3
    dj_dtau = (2 * tau - 1 / s.lambda_x - 1 / s.lambda_y) - r2 * d_env / z**2
    # differentiate the fixed point z^2 = (1+tau)(1+a tau)(1+b tau)/tau
    dtau_dz = -2 * z * tau**2 / eval_Q(ratios, tau)
    return a * a * (dj_dz + dj_dtau * dtau_dz)


def j_prime(ratios: AspectRatios, spike: Spike, z: float) -> float:
    """Analytic z-derivative of ``j_func``."""
    z = _check_outside(ratios, z)
    s = spike.oriented(ratios)
    return _j_prime(ratios, s, z, t_of(ratios, z * z) / ratios.alpha_x)


def j_prime_fd(ratios: AspectRatios, spike: Spike, z: float, step: float | None = None) -> float:
    """Central finite difference of ``j_func`` (default step 1e-6 z)."""
    h = 1e-6 * z if step is None else step
    return (j_func(ratios, spike, z + h) - j_func(ratios, spike, z - h)) / (2 * h)


def _f_canonical(ratios: AspectRatios, s: Spike, z: float, tau: float) -> tuple[float, float]:
    a, b = ratios.alpha_x, ratios.alpha_y
    lx, ly, r2 = s.lambda_x, s.lambda_y, s.rho**2
    env = _envelope(a, b, tau)
    f1 = a * a * (1 + a * tau) * (tau * z * z * (1 - ly * tau) + ly * r2 * env) / (ly * z**3)
    f3 = a * a * (1 + b * tau) * (tau * z * z * (1 - lx * tau) + lx * r2 * env) / (lx * z**3)
    return f1, f3


def f_values(ratios: AspectRatios, spike: Spike, z: float) -> tuple[float, float]:
    """Residue numerators of the spiked resolvent's (v_x, v_x) and (v_y, v_y) entries.

    The spiked entries are h1 + f1 / j and h3 + f3 / j, so a simple zero of j
    at an outlier z = b gives squared overlaps 2 f / j'(b).  Returned in the
    caller's channel order.
    """
    z = _check_outside(ratios, z)
    s = spike.oriented(ratios)
    f1, f3 = _f_canonical(ratios, s, z, t_of(ratios, z * z) / ratios.alpha_x)
    return (f3, f1) if ratios.swapped else (f1, f3)


def _to_user(ratios: AspectRatios, mx: float, my: float) -> tuple[float, float]:
    return (my, mx) if ratios.swapped else (mx, my)


def _clamp(m: float, what: str) -> float:
    if not math.isfinite(m) or m < -CLAMP_TOL or m > 1 + CLAMP_TOL:
        raise ConsistencyError(f"{what}={m!r} lies outside [0, 1]")
    return min(max(m, 0.0), 1.0)


def _double_root_limit(ratios: AspectRatios, tau: float) -> tuple[float, float]:
    # rho -> 0+ on the lambda_x == lambda_y line: each branch carries half
    # of the single-channel overlap
    a, b = ratios.alpha_x, ratios.alpha_y
    q = eval_Q(ratios, tau)
    return q / (2 * (1 + tau) * (1 + b * tau)), q / (2 * (1 + tau) * (1 + a * tau))


def _branch_root(s: Spike, branch: Branch) -> tuple[float, bool]:
    rm, rp = r_pair(s)
    return (rm if Branch(branch) is Branch.MINUS else rp), is_double(rm, rp)


def overlap_m(ratios: AspectRatios, spike: Spike, branch: Branch | str, spike_index: int = 1) -> OverlapPrediction:
    """Limiting squared overlaps on one branch, as 2 f / j' at the outlier position.

    j' is computed analytically and checked against a central difference.
    """
    branch = Branch(branch)
    s = spike.oriented(ratios)
    r, double = _branch_root(s, branch)
    tp = tau_plus(ratios)
    if r > tp or eval_Q(ratios, r) <= 0.0:
        return OverlapPrediction(spike_index, branch, 0.0, 0.0)
    if double:
        mx, my = _double_root_limit(ratios, r)
    else:
        z = b_of(ratios, r)
        tau = t_of(ratios, z * z) / ratios.alpha_x
        jp = _j_prime(ratios, s, z, tau)
        _check_derivative(ratios, spike, z, jp, _sibling_gap(ratios, s, z))
        f1, f3 = _f_canonical(ratios, s, z, tau)
        mx, my = 2 * f1 / jp, 2 * f3 / jp
    mx, my = _to_user(ratios, mx, my)
    return OverlapPrediction(spike_index, branch, _clamp(mx, "m_x"), _clamp(my, "m_y"))


def _j_magnitude(ratios: AspectRatios, s: Spike, z: float, tau: float) -> float:
    """Size of the terms that cancel inside j, for roundoff estimates."""
    a, b = ratios.alpha_x, ratios.alpha_y
    return a * a * (abs(tau - 1 / s.lambda_x) * abs(tau - 1 / s.lambda_y) + s.rho**2 * _envelope(a, b, tau) / z**2)


def _sibling_gap(ratios: AspectRatios, s: Spike, z: float) -> float:
    """Distance from z to the other zero of j, or inf if it is inside the bulk."""
    tp = tau_plus(ratios)
    others = [b_of(ratios, r) for r in r_pair(s) if r <= tp]
    gaps = [abs(o - z) for o in others if o != z]
    return min(gaps, default=math.inf)


def _check_derivative(ratios: AspectRatios, spike: Spike, z: float, jp: float, gap: float = math.inf) -> None:
    # tau(z) has a square-root singularity at the edge and j has a second zero
    # nearby when the two branches almost merge; the step must stay well inside
    # both distances for the difference quotient to be accurate
    h = min(1e-6 * z, 1e-3 * (z - edge(ratios)), 1e-3 * gap)
    if h < 1e-11 * z:
        log.debug("outlier at z=%g too close to the edge for a difference check", z)
        return
    fd = j_prime_fd(ratios, spike, z, h)
    s = spike.oriented(ratios)
    tau = t_of(ratios, z * z) / ratios.alpha_x
    roundoff = 100 * np.finfo(float).eps * _j_magnitude(ratios, s, z, tau) / h
    if abs(fd - jp) > FD_RTOL * abs(jp) + roundoff:
        raise ConsistencyError(f"j' analytic {jp!r} vs finite difference {fd!r} at z={z!r}")


def overlap_closed_form(ratios: AspectRatios, spike: Spike, branch: Branch | str) -> tuple[float, float]:
    """Rational closed form of the branch overlaps in the root tau = r.

    With D = lx + ly + lx ly rho^2 - 2 lx ly (1 - rho^2) tau,

        m_x = lx Q(tau) (1 - ly tau + ly rho^2 (1 + tau)) / ((1 + tau)(1 + alpha_y tau) D)

    and symmetrically for m_y.  Independent of the residue route in ``overlap_m``.
    """
    branch = Branch(branch)
    s = spike.oriented(ratios)
    tau, double = _branch_root(s, branch)
    if tau > tau_plus(ratios):
        return 0.0, 0.0
    a, b = ratios.alpha_x, ratios.alpha_y
    if double:
        return _to_user(ratios, *_double_root_limit(ratios, tau))
    lx, ly, r2 = s.lambda_x, s.lambda_y, s.rho**2
    q = eval_Q(ratios, tau)
    d = lx + ly + lx * ly * r2 - 2 * lx * ly * (1 - r2) * tau
    mx = lx * q * (1 - ly * tau + ly * r2 * (1 + tau)) / ((1 + tau) * (1 + b * tau) * d)
    my = ly * q * (1 - lx * tau + lx * r2 * (1 + tau)) / ((1 + tau) * (1 + a * tau) * d)
    return _to_user(ratios, mx, my)


def beta_optimal(m_minus: float, m_plus: float) -> RotationPlan:
    """Rotation weight beta = m- / sqrt(m-^2 + m+^2) and its score beta m- + sqrt(1 - beta^2) m+."""
    for name, m in (("m_minus", m_minus), ("m_plus", m_plus)):
        if not 0.0 <= m <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {m!r}")
    norm = math.hypot(m_minus, m_plus)
    if norm == 0.0:
        raise DegenerateInputError("both branch overlaps are zero; no rotation is defined")
    beta = m_minus / norm
    return RotationPlan(beta, beta * m_minus + math.sqrt(max(0.0, 1 - beta * beta)) * m_plus)


def rotated_overlap(beta: float, m_minus: float, m_plus: float) -> float:
    """Limiting squared overlap of beta u- + sqrt(1 - beta^2) u+ with the planted vector.

    Assumes both outlier vectors are signed to correlate positively with the
    planted vector; they are orthonormal, so the combination is unit norm.
    """
    return (beta * math.sqrt(m_minus) + math.sqrt(max(0.0, 1 - beta * beta)) * math.sqrt(m_plus)) ** 2


def detection_block(ratios: AspectRatios, spike: Spike, z: float) -> np.ndarray:
    """The 4x4 matrix I - K D whose determinant vanishes at outliers.

    K holds the limiting resolvent quadratic forms (diagonal h-values plus the
    rho * tau coupling), D the spike's strength pattern.  Canonical order.
    """
    z = _check_outside(ratios, z)
    s = spike.oriented(ratios)
    h = h_values(ratios, z)
    tau = t_of(ratios, z * z) / ratios.alpha_x
    k = np.diag([h.h1, h.h2, h.h3, h.h4])
    k[1, 3] = k[3, 1] = s.rho * tau
    c = np.array([[math.sqrt(s.lambda_x * s.lambda_y) * s.rho, math.sqrt(s.lambda_x)], [math.sqrt(s.lambda_y), 0.0]])
    d = np.zeros((4, 4))
    d[:2, 2:] = c
    d[2:, :2] = c.T
    return np.eye(4) - k @ d
