"""Renyi-DP bounds for the last iterate of cyclically-sampled DP-SGD.

Each ``bound_*`` function returns a :class:`BoundReport` instead of raising
when a theorem's hypotheses fail, so a sweep can tabulate every regime side
by side. :func:`best_bound` picks the smallest valid guarantee.
"""

import dataclasses
import enum
import math
from typing import NamedTuple, Optional

from cyclic_rdp.divergence import lipschitz_constant, theta


class Regime(str, enum.Enum):
    CURVATURE_INDEPENDENT = "CurvatureIndependent"
    DIAMETER = "Diameter"
    MULTI_EPOCH = "MultiEpoch"
    MULTI_EPOCH_CONVEX = "MultiEpochConvex"
    TSTAR = "TStar"
    PABI_BASELINE = "PabiBaseline"


PABI_NOTE = "asymptotic comparison (unit constant), not a guarantee"


def _is_int(x):
    return not isinstance(x, bool) and isinstance(x, int)


@dataclasses.dataclass(frozen=True)
class PrivacyParams:
    """DP-SGD hyperparameters.

    ``ell = k / b`` (steps per pass) and ``E = T // ell`` (full passes) are
    always derived, never supplied. ``sigma == 0`` and ``C == inf`` are
    accepted so that noiseless or unclipped runs can be simulated; no bound
    is valid for them.
    """

    alpha: float
    sigma: float
    lam: float
    C: float
    b: int
    k: int
    T: int

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if not self.sigma >= 0 or math.isinf(self.sigma):
            raise ValueError(f"sigma must be a nonnegative real, got {self.sigma}")
        if not self.lam > 0 or math.isinf(self.lam):
            raise ValueError(f"lam must be a positive real, got {self.lam}")
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        for name in ("b", "k", "T"):
            if not _is_int(getattr(self, name)):
                raise ValueError(f"{name} must be an integer, got {getattr(self, name)!r}")
        if self.b < 1 or self.k < 1:
            raise ValueError("b and k must be positive")
        if self.T < 0:
            raise ValueError(f"T must be nonnegative, got {self.T}")
        if self.k % self.b:
            raise ValueError(f"k={self.k} is not a multiple of b={self.b}")

    @property
    def ell(self) -> int:
        return self.k // self.b

    @property
    def E(self) -> int:
        return self.T // self.ell


@dataclasses.dataclass(frozen=True)
class CurvatureSpec:
    """Curvature envelope ``[-m, M]`` and diameter of ``dom h``."""

    m: float
    M: float
    d_h: float = math.inf

    def __post_init__(self):
        if not (self.m >= 0 and self.M >= 0) or math.isinf(self.m) or math.isinf(self.M):
            raise ValueError(f"m and M must be finite and nonnegative, got {self.m}, {self.M}")
        if not self.d_h > 0:
            raise ValueError(f"d_h must be positive or inf, got {self.d_h}")

    @property
    def step_cap(self) -> float:
        """Largest stepsize ``1 / (2 (m + M))`` covered by the curvature bounds."""
        total = self.m + self.M
        return math.inf if total == 0 else 1.0 / (2.0 * total)


class Precondition(NamedTuple):
    name: str
    required: str
    satisfied: bool


@dataclasses.dataclass(frozen=True)
class BoundReport:
    regime: Optional[Regime]
    value: float
    preconditions: tuple = ()
    valid: bool = True
    note: str = ""

    def to_dict(self):
        return {
            "regime": None if self.regime is None else self.regime.value,
            "value": self.value,
            "valid": self.valid,
            "preconditions": [
                {"name": c.name, "required": c.required, "satisfied": c.satisfied}
                for c in self.preconditions
            ],
            "note": self.note,
        }


def _report(regime, preconditions, compute, note=""):
    valid = all(c.satisfied for c in preconditions)
    value = compute() if valid else math.inf
    return BoundReport(regime, value, tuple(preconditions), valid, note)


def _noise(p):
    return Precondition("noise", "sigma > 0", p.sigma > 0)


def _clipped(p):
    return Precondition("clipping", "C < inf", math.isfinite(p.C))


def _full_pass(p):
    return Precondition("full_pass", f"T >= ell = {p.ell}", p.T >= p.ell)


def _stepsize(p, c):
    return Precondition(
        "stepsize", f"lam <= 1/(2(m+M)) = {c.step_cap!r}", p.lam <= c.step_cap
    )


def bound_curvature_independent(p: PrivacyParams) -> BoundReport:
    """``8 alpha T (lam C / sigma)**2``, valid for any stepsize once ``T >= ell``."""
    return _report(
        Regime.CURVATURE_INDEPENDENT,
        [_noise(p), _clipped(p), _full_pass(p)],
        lambda: 8.0 * p.alpha * p.T * (p.lam * p.C / p.sigma) ** 2,
    )


def bound_diameter(p: PrivacyParams, c: CurvatureSpec) -> BoundReport:
    """``alpha / (2 sigma**2) (L_lam d_h + 2 lam C / b)**2`` for a bounded domain."""
    pre = [
        _noise(p),
        _clipped(p),
        _stepsize(p, c),
        Precondition("bounded_domain", "d_h < inf", math.isfinite(c.d_h)),
        Precondition("iterations", "T >= 1", p.T >= 1),
    ]

    def compute():
        L = lipschitz_constant(p.lam, c.m, c.M)
        return p.alpha / (2.0 * p.sigma**2) * (L * c.d_h + 2.0 * p.lam * p.C / p.b) ** 2

    return _report(Regime.DIAMETER, pre, compute)


def _scale(p):
    return (p.lam * p.C / (p.b * p.sigma)) ** 2


def bound_multi_epoch(p: PrivacyParams, c: CurvatureSpec) -> BoundReport:
    """``4 alpha (lam C / (b sigma))**2 [theta(T - E ell) + E theta(ell)]``."""
    pre = [_noise(p), _clipped(p), _stepsize(p, c), _full_pass(p)]

    def compute():
        L = lipschitz_constant(p.lam, c.m, c.M)
        ell, E = p.ell, p.E
        return 4.0 * p.alpha * _scale(p) * (theta(L, p.T - E * ell) + E * theta(L, ell))

    return _report(Regime.MULTI_EPOCH, pre, compute)


def bound_multi_epoch_convex(p: PrivacyParams, c: CurvatureSpec) -> BoundReport:
    """Convex specialization ``4 alpha (lam C / (b sigma))**2 (1/(T - E ell) + E / ell)``.

    The ``1 / (T - E ell)`` term is dropped when ``T`` is a whole number of
    passes. Requires ``c.m == 0``.
    """
    pre = [
        _noise(p),
        _clipped(p),
        Precondition("convex", "m == 0", c.m == 0),
        _stepsize(p, c),
        _full_pass(p),
    ]

    def compute():
        ell, E = p.ell, p.E
        r = p.T - E * ell
        return 4.0 * p.alpha * _scale(p) * ((1.0 / r if r else 0.0) + E * (1.0 / ell))

    return _report(Regime.MULTI_EPOCH_CONVEX, pre, compute)


def bound_tstar(p: PrivacyParams, c: CurvatureSpec, t_star: int) -> BoundReport:
    """Position-dependent bound ``2 alpha (lam C/(b sigma))**2 [E' theta(ell) + theta(r)]``.

    Here ``E' = (T - t_star - 1) // ell`` and ``r = T - t_star - 1 - E' ell``.
    ``t_star`` follows the indexing in which ``X_{t_star}`` is the last
    iterate shared by both runs. This is an analysis aid and is never
    returned by :func:`best_bound`.
    """
    if not _is_int(t_star):
        raise ValueError(f"t_star must be an integer, got {t_star!r}")
    pre = [
        _noise(p),
        _clipped(p),
        _stepsize(p, c),
        Precondition("t_star", "t_star >= 1", t_star >= 1),
        Precondition("horizon", f"T >= t_star + 1 = {t_star + 1}", p.T >= t_star + 1),
    ]

    def compute():
        L = lipschitz_constant(p.lam, c.m, c.M)
        n = p.T - t_star - 1
        E = n // p.ell
        return 2.0 * p.alpha * _scale(p) * (E * theta(L, p.ell) + theta(L, n - E * p.ell))

    return _report(Regime.TSTAR, pre, compute)


def all_bounds(p: PrivacyParams, c: CurvatureSpec) -> list:
    """Every guarantee regime, in a fixed order (ties resolve to the earlier one)."""
    return [
        bound_curvature_independent(p),
        bound_diameter(p, c),
        bound_multi_epoch(p, c),
        bound_multi_epoch_convex(p, c),
    ]


def best_bound(p: PrivacyParams, c: CurvatureSpec) -> BoundReport:
    """Smallest valid guarantee among :func:`all_bounds`."""
    best = None
    for report in all_bounds(p, c):
        if report.valid and (best is None or report.value < best.value):
            best = report
    if best is None:
        return BoundReport(None, math.inf, (), False, "no regime applies")
    return best


def pabi_baseline(p: PrivacyParams, Q: float) -> BoundReport:
    """Amplification-by-iteration comparison line ``(alpha E / ell) (lam Q / sigma)**2``."""
    if not Q > 0:
        raise ValueError(f"Q must be positive, got {Q}")
    if p.sigma == 0:
        value = math.inf
    else:
        value = p.alpha * p.E / p.ell * (p.lam * Q / p.sigma) ** 2
    return BoundReport(Regime.PABI_BASELINE, value, (), True, PABI_NOTE)


def rdp_to_dp(rdp_epsilon: float, alpha: float, delta: float) -> float:
    """Standard conversion ``eps + log(1/delta) / (alpha - 1)``."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if rdp_epsilon < 0:
        raise ValueError("rdp_epsilon must be nonnegative")
    return rdp_epsilon + math.log(1.0 / delta) / (alpha - 1.0)
