"""Property suites driven by ``cyclic-rdp verify`` and the acceptance tests.

Each suite returns a :class:`SuiteResult`. ``max_violation`` is the largest
amount by which a checked quantity exceeded its allowance; it is ``<= 0``
exactly when the suite passes.
"""

import dataclasses
import itertools
import math

import numpy as np

from cyclic_rdp.accountant import CurvatureSpec, PrivacyParams, all_bounds
from cyclic_rdp.divergence import lipschitz_constant, residual_schedule
from cyclic_rdp.oracle import properties
from cyclic_rdp.oracle.density import GridSpec, density_propagate_1d, oracle_divergence, renyi_divergence_grid
from cyclic_rdp.oracle.qp import qp_residual_oracle
from cyclic_rdp.sim import RegularizerSpec, generate_quadratic_dataset, make_neighbor

SUITES = ("lipschitz", "displacement", "prox", "residual-qp", "density-bound")

CURVATURE_GRID = tuple((m, M) for m in (0.0, 0.5, 1.0, 5.0) for M in (0.0, 0.5, 1.0, 5.0) if m + M > 0)


@dataclasses.dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    max_violation: float
    n_checks: int
    detail: str = ""

    def to_dict(self):
        return dataclasses.asdict(self)


def _result(name, violations, detail=""):
    worst = max(violations) if violations else -math.inf
    return SuiteResult(name, bool(worst <= 0), float(worst), len(violations), detail)


def lipschitz_datasets(n_datasets=20, dims=(2, 10), k=4, seed=0):
    """``(ds, m, M)`` triples cycling over the curvature grid and ``dims``."""
    out = []
    for j, (dim, (m, M)) in enumerate(itertools.product(dims, CURVATURE_GRID)):
        if j >= n_datasets:
            break
        out.append((generate_quadratic_dataset(dim, k, m, M, seed + j), m, M))
    return out


def lipschitz_suite(n_datasets=20, dims=(2, 10), n_pairs=10_000, C=math.inf, seed=0, scale=1.0, rtol=1e-6):
    """Empirical Lipschitz ratio of the step at ``lam = 1/(2(m+M))`` against ``scale * L_lam``.

    ``scale`` below one corrupts the constant and should make the suite fail.
    """
    viol = []
    worst = (0.0, None)
    for j, (ds, m, M) in enumerate(lipschitz_datasets(n_datasets, dims, seed=seed)):
        lam = 1.0 / (2.0 * (m + M))
        allowed = scale * lipschitz_constant(lam, m, M) * (1.0 + rtol)
        emp = properties.empirical_lipschitz(ds, RegularizerSpec.zero(), lam, C, n_pairs, seed + j)
        viol.append(emp - allowed)
        if emp / allowed > worst[0]:
            worst = (emp / allowed, (m, M, ds.dim))
    return _result("lipschitz", viol, f"worst ratio/allowed {worst[0]!r} at (m, M, dim) = {worst[1]}")


def saturating_pair(k, C, m=0.0, M=1.0, seed=0, i_star=1, gain=10.0):
    """1-D neighbors whose record ``i_star`` is a linear loss with slope ``+-gain * C``.

    Both clipped gradients saturate, at ``+C`` and ``-C``, everywhere.
    """
    ds = generate_quadratic_dataset(1, k, m, M, seed)
    zero = np.zeros((1, 1))
    base = make_neighbor(ds, i_star, (zero, [gain * C]))
    return base, make_neighbor(base, i_star, (zero, [-gain * C]))


def displacement_suite(n_samples=2_000, seed=0, atol=1e-12):
    """Displacement at the differing step never exceeds ``2 lam C / b``, and the saturating pair attains it."""
    viol = []
    attained = math.inf
    for j, (k, b, lam, C) in enumerate(itertools.product((4, 8), (1, 2, 4), (0.1, 0.5), (0.5, 1.0))):
        ds, ds_prime = saturating_pair(k, C, seed=seed + j, i_star=1 + j % k)
        bound = 2.0 * lam * C / b
        disp = properties.neighbor_displacement(ds, ds_prime, lam, C, b, n_samples, seed + j)
        viol.append(disp - bound - atol)
        attained = min(attained, disp / bound)
        # Random multivariate neighbor: bound only.
        dsr = generate_quadratic_dataset(3, k, 0.5, 1.0, seed + 100 + j)
        other = generate_quadratic_dataset(3, k, 0.5, 1.0, seed + 200 + j)
        dsr_prime = make_neighbor(dsr, 1 + j % k, (other.A[0], 5.0 * other.c[0]))
        disp = properties.neighbor_displacement(dsr, dsr_prime, lam, C, b, n_samples, seed + j)
        viol.append(disp - bound - atol)
    # The saturating construction must come within 0.1% of the bound.
    viol.append(0.999 - attained)
    return _result("displacement", viol, f"min attained fraction {attained!r}")


def prox_suite(n_pairs=2_000, seed=0, atol=1e-12):
    """Both prox inequalities for every regularizer kind and for clipping."""
    viol = []
    cases = [
        RegularizerSpec.zero(),
        RegularizerSpec.l1(0.3),
        RegularizerSpec.ball(1.5),
        0.7,
    ]
    for j, case in enumerate(cases):
        for dim in (1, 3):
            ex = properties.prox_excess(case, 0.8, n_pairs, seed + 10 * j + dim, dim=dim)
            viol.extend([ex["firm"] - atol, ex["pythag"] - atol])
    return _result("prox", viol)


RESIDUAL_GRID = tuple(
    (L, T, tau, s)
    for T in range(1, 7)
    for L in (1.0, 1.25, 2.0)
    for tau, s in ((0.0, 1.0), (0.5, 0.2))
)


def residual_qp_suite(grid=RESIDUAL_GRID, atol=1e-6, obj_rtol=1e-8):
    """Brute-force QP minimizer against the closed-form schedule."""
    viol = []
    for L, T, tau, s in grid:
        a_qp = qp_residual_oracle(L, T, tau, s)
        sched = residual_schedule(L, T, tau, s)
        viol.append(float(np.max(np.abs(a_qp - sched.a))) - atol)
        obj_qp = 0.5 * float(a_qp @ a_qp)
        obj = 0.5 * sched.total_square
        viol.append(abs(obj_qp - obj) / max(obj, 1e-300) - obj_rtol)
    return _result("residual-qp", viol)


@dataclasses.dataclass(frozen=True)
class DensityConfig:
    alpha: float
    sigma: float
    C: float
    ell: int
    T: int
    reg: RegularizerSpec
    m: float
    M: float
    seed: int

    @property
    def lam(self):
        return 1.0 / (2.0 * (self.m + self.M))

    def params(self):
        return PrivacyParams(self.alpha, self.sigma, self.lam, self.C, 1, self.ell, self.T)

    def curvature(self):
        return CurvatureSpec(self.m, self.M, self.reg.diameter)

    def datasets(self):
        return saturating_pair(self.ell, self.C, self.m, self.M, seed=self.seed)


DENSITY_CURVATURES = ((0.0, 1.0), (0.5, 0.5), (1.0, 0.25))
BALL_RADIUS = 2.0


# Coprime to the grid size, so the picks are distinct and cover every
# (ell, T) combination.
_DENSITY_STRIDE = 29


def density_configs(n_configs=20):
    """Deterministic stride through the 96-point 1-D acceptance grid."""
    full = []
    for alpha, sigma, C, ell, reg in itertools.product(
        (2.0, 8.0), (0.5, 1.0), (0.5, 1.0), (2, 4), (RegularizerSpec.zero(), RegularizerSpec.ball(BALL_RADIUS))
    ):
        for T in (ell, 2 * ell, 2 * ell + 1):
            full.append((alpha, sigma, C, ell, T, reg))
    if not 1 <= n_configs <= len(full):
        raise ValueError(f"n_configs must lie in [1, {len(full)}]")
    out = []
    for j in range(n_configs):
        i = (_DENSITY_STRIDE * j) % len(full)
        m, M = DENSITY_CURVATURES[j % len(DENSITY_CURVATURES)]
        out.append(DensityConfig(*full[i], m=m, M=M, seed=j))
    return out


def density_check(cfg: DensityConfig, n_cells=4096):
    """Grid divergence, its refinement change and the valid bounds for one config."""
    ds, ds_prime = cfg.datasets()
    p = cfg.params()
    D, spec, _, _ = oracle_divergence(ds, ds_prime, cfg.reg, p, 0.0, GridSpec(n_cells=n_cells))
    P2, Q2 = density_propagate_1d(ds, ds_prime, cfg.reg, p, 0.0, spec.refined())
    D2 = renyi_divergence_grid(P2, Q2, p.alpha)
    bounds = [r for r in all_bounds(p, cfg.curvature()) if r.valid]
    return {
        "divergence": D2,
        "coarse": D,
        "refine_change": abs(D2 - D) / max(abs(D2), 1e-300),
        "bounds": {r.regime.value: r.value for r in bounds},
    }


def density_bound_suite(n_configs=20, n_cells=4096, refine_rtol=1e-3):
    """Oracle divergence of the last iterates never exceeds a valid guarantee."""
    viol = []
    lines = []
    for cfg in density_configs(n_configs):
        res = density_check(cfg, n_cells)
        for value in res["bounds"].values():
            viol.append(res["divergence"] - value)
        viol.append(res["refine_change"] - refine_rtol)
        tightest = min(res["bounds"].values(), default=math.inf)
        lines.append(f"D={res['divergence']:.6g} min_bound={tightest:.6g}")
    return _result("density-bound", viol, "; ".join(lines))


def run_suite(name, **kwargs) -> SuiteResult:
    fn = {
        "lipschitz": lipschitz_suite,
        "displacement": displacement_suite,
        "prox": prox_suite,
        "residual-qp": residual_qp_suite,
        "density-bound": density_bound_suite,
    }.get(name)
    if fn is None:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
    return fn(**kwargs)

