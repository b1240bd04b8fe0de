"""Shift-reduction arithmetic behind the last-iterate Renyi bounds.

Nothing here evaluates an actual divergence. The functions reproduce the
bookkeeping that chains the one-step shifted-divergence recurrence: a shift
budget ``tau`` that is grown by the operator's Lipschitz constant and paid
down with Gaussian noise, each payment of size ``a`` costing
``alpha * a**2 / (2 * sigma**2)``.
"""

import dataclasses
import math

import numpy as np


def _check_L(L):
    if not L >= 1.0:
        raise ValueError(f"L must be >= 1, got {L}")


def _check_count(name, s):
    if isinstance(s, bool) or int(s) != s:
        raise ValueError(f"{name} must be an integer, got {s}")
    if s < 0:
        raise ValueError(f"{name} must be nonnegative, got {s}")
    return int(s)


def theta(L: float, s: int) -> float:
    """Per-pass amplification factor ``L**(2(s-1)) / sum_{j<s} L**(2j)``.

    Evaluated as ``(1 - L**-2) / (1 - L**(-2s))`` through ``expm1`` so that
    neither large ``s`` nor ``L`` close to one loses precision.

    Args:
      L: Lipschitz constant, at least one.
      s: Number of steps, a nonnegative integer.

    Returns:
      ``0`` for ``s == 0``, ``1/s`` for ``L == 1``, a value in ``(0, 1]``
      otherwise.
    """
    _check_L(L)
    s = _check_count("s", s)
    if s == 0:
        return 0.0
    if L == 1.0:
        return 1.0 / s
    log_l = math.log1p(L - 1.0)
    return math.expm1(-2.0 * log_l) / math.expm1(-2.0 * s * log_l)


def lipschitz_constant(lam: float, m: float, M: float) -> float:
    """Lipschitz constant claimed for the clipped prox-linear step.

    ``sqrt(1 + 2 lam m (1 + m / (M + m)))``; the ratio ``m / (M + m)`` is
    taken as zero when ``m == M == 0``.
    """
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    if m < 0 or M < 0:
        raise ValueError(f"curvature constants must be nonnegative, got m={m}, M={M}")
    ratio = m / (M + m) if m > 0 else 0.0
    return math.sqrt(1.0 + 2.0 * lam * m * (1.0 + ratio))


@dataclasses.dataclass(frozen=True)
class ResidualSchedule:
    """Optimal noise payments for one pass of ``T`` steps.

    ``a`` are the payments, ``b = a / (L tau + s)`` their normalized form and
    ``R`` the normalized shift left over after each step (``R[-1] == 0``).
    """

    T: int
    L: float
    tau: float
    s: float
    a: np.ndarray
    b: np.ndarray
    R: np.ndarray
    S_T: float

    @property
    def total_square(self) -> float:
        return float(np.sum(self.a**2))


def residual_schedule(L: float, T: int, tau: float, s: float) -> ResidualSchedule:
    """Builds the minimum-cost payment schedule for a single pass.

    Args:
      L: Lipschitz constant of the per-step operator, at least one.
      T: Number of steps in the pass.
      tau: Initial shift budget.
      s: Displacement between the neighboring operators at the first step.

    Returns:
      The schedule ``a_t = (L tau + s) L**(T-1) L**(T-t) / S_T`` together
      with the normalized residual shifts.
    """
    _check_L(L)
    T = _check_count("T", T)
    if T == 0:
        raise ValueError("T must be positive")
    if tau < 0 or s < 0:
        raise ValueError("tau and s must be nonnegative")
    gap = L * tau + s
    if not gap > 0:
        raise ValueError("L * tau + s must be positive")

    t = np.arange(1, T + 1, dtype=float)
    # b_t = L**(1-t) / sum_{j<T} L**(-2j); same value as the unscaled form
    # without overflowing L**(2T).
    inv_sq = np.power(L, -2.0 * np.arange(T))
    tail = np.cumsum(inv_sq[::-1])[::-1]  # tail[i] = sum_{j >= i} L**(-2j)
    norm = tail[0]
    b = np.power(L, 1.0 - t) / norm
    # R_t = L**(t-1) * sum_{i <= T-1-t} L**(2i) / S_T
    #     = L**(-t-1) * sum_{i <= T-1-t} L**(-2i) / norm, exactly zero at t = T.
    head = np.cumsum(inv_sq)  # head[n] = sum_{i <= n} L**(-2i)
    R = np.zeros(T)
    R[:-1] = np.power(L, -t[:-1] - 1.0) * head[T - 1 - t[:-1].astype(int)] / norm
    with np.errstate(over="ignore"):
        S_T = float(np.sum(np.power(L, 2.0 * np.arange(T))))
    return ResidualSchedule(
        T=T, L=float(L), tau=float(tau), s=float(s), a=gap * b, b=b, R=R, S_T=S_T
    )


@dataclasses.dataclass(frozen=True)
class ShiftLedger:
    """Symbolic state of a chained shifted-divergence argument."""

    tau: float
    accumulated_cost: float
    alpha: float
    sigma: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"tau must be nonnegative, got {self.tau}")
        if self.accumulated_cost < 0:
            raise ValueError("accumulated_cost must be nonnegative")
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


# Relative slack for a nominally exact shift cancellation.
_SHIFT_RTOL = 1e-12


def shift_reduce_step(
    ledger: ShiftLedger, L: float, zeta: float, s: float, a: float
) -> ShiftLedger:
    """One application of the shifted-divergence recurrence.

    The shift grows to ``L tau + zeta + s`` and is reduced by the payment
    ``a``, which costs ``alpha a**2 / (2 sigma**2)``.

    Raises:
      ValueError: if ``a`` exceeds the available shift (infeasible residual).
    """
    _check_L(L)
    if zeta < 0 or s < 0 or a < 0:
        raise ValueError("zeta, s and a must be nonnegative")
    available = L * ledger.tau + zeta + s
    new_tau = available - a
    if new_tau < 0:
        if new_tau < -_SHIFT_RTOL * max(available, a):
            raise ValueError(
                f"residual a={a} exceeds available shift {available}"
            )
        new_tau = 0.0
    cost = ledger.alpha * a * a / (2.0 * ledger.sigma**2)
    return dataclasses.replace(
        ledger, tau=new_tau, accumulated_cost=ledger.accumulated_cost + cost
    )


def chain_schedule(ledger: ShiftLedger, L: float, schedule: ResidualSchedule) -> ShiftLedger:
    """Runs ``shift_reduce_step`` over a pass, charging ``schedule.s`` at step one.

    Each payment is the available shift minus the schedule's closed-form
    residual ``(L tau + s) R_t``. That equals ``a_t`` up to rounding, but
    unlike replaying ``a_t`` directly it does not let the forward recurrence
    amplify rounding errors by ``L`` per step.
    """
    if ledger.tau != schedule.tau:
        raise ValueError(f"ledger shift {ledger.tau} does not match the schedule's tau {schedule.tau}")
    gap = L * schedule.tau + schedule.s
    for t in range(schedule.T):
        s = schedule.s if t == 0 else 0.0
        a = max(L * ledger.tau + s - gap * float(schedule.R[t]), 0.0)
        ledger = shift_reduce_step(ledger, L, 0.0, s, a)
    return ledger


def _check_alpha_sigma(alpha, sigma):
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")


def single_pass_cost(L, tau, s, T, alpha, sigma) -> float:
    """``(alpha / 2) ((L tau + s) / sigma)**2 theta_L(T)``."""
    _check_L(L)
    _check_alpha_sigma(alpha, sigma)
    if tau < 0 or s < 0:
        raise ValueError("tau and s must be nonnegative")
    return 0.5 * alpha * ((L * tau + s) / sigma) ** 2 * theta(L, T)


def multi_pass_cost(L, tau, s, T, ell, alpha, sigma) -> float:
    """Cost of ``T`` steps whose operators differ by ``s`` every ``ell`` steps.

    The first pass starts from shift ``tau``; every later pass, including
    the final partial one of ``T - E ell`` steps, starts from zero shift.
    """
    _check_L(L)
    _check_alpha_sigma(alpha, sigma)
    T = _check_count("T", T)
    ell = _check_count("ell", ell)
    if not 1 <= ell <= T:
        raise ValueError("ell must lie in [1, T]")
    E = T // ell
    head = (L * tau + s) ** 2 * theta(L, ell)
    rest = s**2 * ((E - 1) * theta(L, ell) + theta(L, T - E * ell))
    return alpha / (2.0 * sigma**2) * (head + rest)


def chain_multi_pass(ledger: ShiftLedger, L, s, T, ell) -> ShiftLedger:
    """Ledger counterpart of :func:`multi_pass_cost`."""
    E = T // ell
    lengths = [ell] * E + ([T - E * ell] if T > E * ell else [])
    for n in lengths:
        if L * ledger.tau + s == 0:
            continue
        ledger = chain_schedule(ledger, L, residual_schedule(L, n, ledger.tau, s))
    return ledger


def clipped_pass_cost(zeta, T, alpha, sigma) -> float:
    """Curvature-free cost ``2 alpha T (zeta / sigma)**2`` with additive slack ``zeta``.

    Charges ``zeta + s`` at the first step and ``zeta`` afterwards, with
    ``s = zeta`` and unit Lipschitz constant.
    """
    _check_alpha_sigma(alpha, sigma)
    T = _check_count("T", T)
    return 2.0 * alpha * T * (zeta / sigma) ** 2
