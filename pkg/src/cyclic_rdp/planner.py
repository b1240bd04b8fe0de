"""Noise and stepsize calibration for a target ``(alpha, epsilon)``."""

import dataclasses
import math

from cyclic_rdp.divergence import theta


@dataclasses.dataclass(frozen=True)
class PlanResult:
    """Calibrated DP-SGD settings.

    Attributes:
      lam_bar: Stepsize ``1 / (2 (M + m))``.
      sigma_bar: Smallest noise level the plan certifies, ``sigma_formula``
        times ``inflation``.
      ell_bar: Minimum pass length; ``inf`` when ``m == 0``.
      achieved_bound: Certified Renyi bound at ``sigma_bar``; at most
        ``epsilon``.
      sigma_formula: The closed-form noise level before inflation.
      inflation: Factor applied to ``sigma_formula`` to restore the
        guarantee (``1.0`` when none was needed).
      convex_degenerate: True when ``m == 0`` and the pass-length condition
        cannot be met.
    """

    lam_bar: float
    sigma_bar: float
    ell_bar: float
    achieved_bound: float
    sigma_formula: float
    inflation: float
    convex_degenerate: bool


def theta_upper_threshold(L: float, xi: float) -> float:
    """Smallest real ``s`` with ``theta(L, s) <= xi (1 - L**-2)``: ``log_L sqrt(xi/(xi-1))``."""
    if not L > 1:
        raise ValueError(f"L must exceed 1, got {L}")
    if not xi > 1:
        raise ValueError(f"xi must exceed 1, got {xi}")
    return 0.5 * math.log(xi / (xi - 1.0)) / math.log(L)


def _certified(alpha, C, lam, b, sigma, growth):
    return 4.0 * alpha * (C * lam / (b * sigma)) ** 2 * growth


def plan_for_epsilon(m, M, C, b, E, alpha, epsilon) -> PlanResult:
    """Picks ``(lam, sigma, ell)`` so that ``E`` passes are ``(alpha, epsilon)``-RDP.

    The certified bound is ``4 alpha (C lam / (b sigma))**2 (1 + 4 m E / (M + m))``,
    which dominates the multi-epoch bound for every ``ell >= ell_bar`` and
    any ``T`` with ``E`` full passes. ``sigma`` is the closed form scaled up
    by the smallest factor that brings this bound under ``epsilon``.
    """
    if m < 0 or M < 0 or m + M == 0:
        raise ValueError("need m, M >= 0 with m + M > 0")
    if not C > 0 or not epsilon > 0:
        raise ValueError("C and epsilon must be positive")
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if int(b) != b or b < 1 or int(E) != E or E < 1:
        raise ValueError("b and E must be positive integers")

    lam = 1.0 / (2.0 * (M + m))
    ratio = m / (M + m)
    sigma0 = C * lam / (2.0 * b) * math.sqrt((1.0 + 4.0 * ratio * E) / (alpha * epsilon))
    ell_bar = math.inf if m == 0 else math.log(2.0) / math.log1p(m * lam)

    growth = 1.0 + 4.0 * ratio * E
    achieved = _certified(alpha, C, lam, b, sigma0, growth)
    inflation = 1.0
    sigma = sigma0
    if achieved > epsilon:
        inflation = math.sqrt(achieved / epsilon)
        sigma = sigma0 * inflation
        achieved = _certified(alpha, C, lam, b, sigma, growth)
        while achieved > epsilon:
            sigma = math.nextafter(sigma, math.inf)
            achieved = _certified(alpha, C, lam, b, sigma, growth)
        inflation = sigma / sigma0
    return PlanResult(
        lam_bar=lam,
        sigma_bar=sigma,
        ell_bar=ell_bar,
        achieved_bound=achieved,
        sigma_formula=sigma0,
        inflation=inflation,
        convex_degenerate=(m == 0),
    )


def epoch_independent_stepsize(E: int, m: float, M: float) -> float:
    """``min(1/sqrt(E), 1/(2(m+M)))``; caps the multi-epoch bound independently of ``E``."""
    if int(E) != E or E < 1:
        raise ValueError(f"E must be a positive integer, got {E}")
    if m < 0 or M < 0 or m + M == 0:
        raise ValueError("need m, M >= 0 with m + M > 0")
    return min(1.0 / math.sqrt(E), 1.0 / (2.0 * (m + M)))


def epoch_independent_bound(alpha, C, b, sigma, L, ell) -> float:
    """Right-hand side ``4 alpha (C / (b sigma))**2 (1 + theta_L(ell))``."""
    return 4.0 * alpha * (C / (b * sigma)) ** 2 * (1.0 + theta(L, ell))
