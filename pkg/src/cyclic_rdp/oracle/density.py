"""Exact-in-law propagation of 1-D DP-SGD on a grid, and grid Renyi divergence.

The law of ``X_t`` is carried as a density sampled at grid nodes plus a few
point masses. One step pushes every quadrature node ``z_j`` (mass
``w_j p(z_j)``) through the monotone map ``phi_t`` and spreads it with the
``N(0, sigma^2)`` kernel, i.e. the Chapman-Kolmogorov integral
``q(y) = int p(x) N(y; phi_t(x), sigma^2) dx`` evaluated by direct
quadrature (trapezoid with Gregory end corrections). The regularizer's prox
then moves mass: the ball projection piles the tails onto endpoint atoms
and the soft threshold collapses ``[-lam w, lam w]`` into an atom at zero.
"""

import dataclasses
import math

import numba
import numpy as np
from scipy import special

from cyclic_rdp.accountant import CurvatureSpec, PrivacyParams
from cyclic_rdp.sim import RegularizerSpec, SyntheticDataset, batch_indices, clip_rows

MASS_TOL = 1e-8
TRUNCATION_TOL = 1e-10
_Q_FLOOR = 1e-300
_REFRESH = 16


class TruncationError(ValueError):
    """Raised when the grid support cuts off more than ``TRUNCATION_TOL`` of mass."""


@dataclasses.dataclass(frozen=True, eq=False)
class DensityGrid:
    """A law on ``[lo, hi]``: node densities plus point masses.

    ``density`` holds values at the ``n_cells + 1`` nodes
    ``lo + j (hi - lo) / n_cells``. ``atom_lo`` and ``atom_hi`` sit at the
    endpoints; ``atom_zero`` sits at the origin (only used by the L1 prox,
    whose grids always have zero as a node). ``split`` is the index of a
    node where the density may jump; quadrature treats each side as its own
    panel and the stored node value is the mean of the two one-sided limits.
    """

    lo: float
    hi: float
    n_cells: int
    density: np.ndarray
    atom_lo: float = 0.0
    atom_hi: float = 0.0
    atom_zero: float = 0.0
    split: int | None = None

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_cells + 1)

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.n_cells

    @property
    def weights(self) -> np.ndarray:
        return quadrature_weights(self.n_cells, self.h, self.split)

    def mass(self) -> float:
        return float(self.weights @ self.density) + self.atom_lo + self.atom_hi + self.atom_zero

    def same_support(self, other) -> bool:
        return (self.lo, self.hi, self.n_cells, self.split) == (other.lo, other.hi, other.n_cells, other.split)


# Trapezoid rule with Gregory endpoint corrections; fourth order even when
# the density is cut off at a ball boundary.
_GREGORY_ENDS = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])


def quadrature_weights(n_cells, h, split=None):
    """Node weights for ``n_cells`` uniform cells of width ``h``.

    With ``split`` the two panels on either side of that node get separate
    end corrections; the split node's weight is the sum of its two end
    weights, which is exact when its value is the mean of the one-sided limits
    and the end weights agree.
    """
    if split is not None:
        if not 0 < split < n_cells or min(split, n_cells - split) < 6:
            raise ValueError("split needs at least 6 cells on each side")
        w = np.zeros(n_cells + 1)
        w[: split + 1] += quadrature_weights(split, h)
        w[split:] += quadrature_weights(n_cells - split, h)
        return w
    w = np.full(n_cells + 1, h)
    if n_cells >= 6:
        w[:3] = h * _GREGORY_ENDS
        w[-3:] = h * _GREGORY_ENDS[::-1]
    else:
        w[0] = w[-1] = 0.5 * h
    return w


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Resolution of the propagation grid.

    The support is ``x0 +/- (support_sigmas sigma sqrt(T) + lam C T + extra)``
    unless the regularizer is a ball, whose grid is the ball itself.
    """

    n_cells: int = 8192
    support_sigmas: float = 12.0
    extra: float = 0.0

    def refined(self):
        return dataclasses.replace(self, n_cells=2 * self.n_cells)


def _support(reg, p, x0, spec):
    if reg.kind == "ball":
        return -reg.radius, reg.radius
    half = spec.support_sigmas * p.sigma * math.sqrt(max(p.T, 1)) + p.lam * p.C * p.T + spec.extra
    if reg.kind == "l1":
        # Symmetric so that the origin is a node.
        half = abs(x0) + half
        return -half, half
    return x0 - half, x0 + half


def _step_map(ds, p, t):
    batch = np.asarray(batch_indices(t, p.b, p.k)) - 1
    a = ds.A[batch, 0, 0]
    c = ds.c[batch, 0]

    def phi(x):
        g = a[None, :] * x[:, None] + c[None, :]
        return x - p.lam * clip_rows(g[..., None], p.C)[..., 0].sum(axis=1) / p.b

    return phi


@numba.njit(cache=True)
def _mix_uniform(lo, h, n_nodes, y, mass, sigma):
    """Gaussian mixture on the uniform nodes ``lo + j h``.

    Walks outward from each source's nearest node. Successive kernel values
    follow ``k_{j+1} = k_j r_j`` with ``r_{j+1} = r_j exp(-h^2/sigma^2)``, so
    most pairs cost two multiplies; the exact value is refreshed every
    ``_REFRESH`` nodes to stop drift. A walk ends once its contribution
    drops below ``1e-310``.
    """
    out = np.zeros(n_nodes)
    inv2 = 1.0 / (2.0 * sigma * sigma)
    damp = math.exp(-h * h / (sigma * sigma))
    for i in range(y.size):
        yi = y[i]
        mi = mass[i]
        j0 = int(math.floor((yi - lo) / h + 0.5))
        j0 = min(max(j0, 0), n_nodes - 1)
        for direction in (1, -1):
            j = j0 if direction == 1 else j0 - 1
            step = 0
            val = 0.0
            ratio = 0.0
            while 0 <= j < n_nodes:
                if step % _REFRESH == 0:
                    u = lo + j * h - yi
                    val = math.exp(-u * u * inv2)
                    # k_{j+d} / k_j for the next node in this direction
                    ratio = math.exp(-(2.0 * direction * u * h + h * h) * inv2)
                else:
                    val *= ratio
                    ratio *= damp
                contrib = mi * val
                if contrib < 1e-310 and (lo + j * h - yi) * direction > 0:
                    break
                out[j] += contrib
                j += direction
                step += 1
    return out / (sigma * math.sqrt(2.0 * math.pi))


def _mix(z, y, mass, sigma):
    """``sum_i mass_i N(z; y_i, sigma^2)`` at the nodes ``z``."""
    if z.size > 2 and z[1] > z[0] and np.allclose(np.diff(z), z[1] - z[0], rtol=1e-9, atol=0):
        return _mix_uniform(float(z[0]), float(z[1] - z[0]), z.size, y, mass, float(sigma))
    u = (z[:, None] - y[None, :]) / (sigma * math.sqrt(2.0))
    return np.exp(-u * u) @ mass / (sigma * math.sqrt(2.0 * math.pi))


def _tail_mass(y, mass, sigma, lo=None, hi=None):
    """Mass of the mixture below ``lo`` or above ``hi``."""
    if lo is not None:
        return float(special.ndtr((lo - y) / sigma) @ mass)
    return float(special.ndtr((y - hi) / sigma) @ mass)


def _interval_mass(y, mass, sigma, a, b):
    return float((special.ndtr((b - y) / sigma) - special.ndtr((a - y) / sigma)) @ mass)


def _propagate(ds, reg, p, x0, spec):
    lo, hi = _support(reg, p, x0, spec)
    n = spec.n_cells
    z = np.linspace(lo, hi, n + 1)
    split = None
    if reg.kind == "l1":
        if n % 2:
            raise ValueError("the L1 prox needs an even cell count so zero is a node")
        split = n // 2
    w = quadrature_weights(n, (hi - lo) / n, split)
    src_x = np.array([float(x0)])
    src_m = np.array([1.0])
    dens = np.zeros(n + 1)
    atoms = {"lo": 0.0, "hi": 0.0, "zero": 0.0}
    if p.T == 0:
        raise ValueError("T must be positive for density propagation")
    for t in range(1, p.T + 1):
        phi = _step_map(ds, p, t)
        y = phi(src_x)
        if reg.kind == "zero":
            dens = _mix(z, y, src_m, p.sigma)
        elif reg.kind == "ball":
            dens = _mix(z, y, src_m, p.sigma)
            atoms["lo"] = _tail_mass(y, src_m, p.sigma, lo=-reg.radius)
            atoms["hi"] = _tail_mass(y, src_m, p.sigma, hi=reg.radius)
        else:
            thr = p.lam * reg.weight
            pos = np.arange(n + 1) > split
            neg = np.arange(n + 1) < split
            dens = np.zeros(n + 1)
            dens[pos] = _mix(z[pos] + thr, y, src_m, p.sigma)
            dens[neg] = _mix(z[neg] - thr, y, src_m, p.sigma)
            both = _mix(np.array([thr, -thr]), y, src_m, p.sigma)
            dens[split] = both.mean()
            atoms["zero"] = _interval_mass(y, src_m, p.sigma, -thr, thr)
        # Next sources: quadrature nodes with positive mass plus atoms.
        node_m = w * dens
        keep = node_m > 0
        src_x = z[keep]
        src_m = node_m[keep]
        extra_x, extra_m = [], []
        for where, pos_ in (("lo", lo), ("hi", hi), ("zero", 0.0)):
            if atoms[where] > 0:
                extra_x.append(pos_)
                extra_m.append(atoms[where])
        if extra_x:
            src_x = np.concatenate([src_x, extra_x])
            src_m = np.concatenate([src_m, extra_m])
    grid = DensityGrid(lo, hi, n, dens, atoms["lo"], atoms["hi"], atoms["zero"], split)
    lost = 1.0 - grid.mass()
    if lost > TRUNCATION_TOL:
        raise TruncationError(f"grid truncation lost mass {lost:.3e}; widen the support")
    if abs(lost) > MASS_TOL:
        raise ValueError(f"grid mass off by {lost:.3e}; refine the grid")
    return grid


def check_monotone(ds: SyntheticDataset, p: PrivacyParams):
    """Rejects settings where the 1-D step map could fail to be nondecreasing."""
    if ds.dim != 1:
        raise ValueError("density propagation is one-dimensional")
    cap = CurvatureSpec(ds.declared_m, ds.declared_M).step_cap
    if p.lam > cap:
        raise ValueError(f"lam={p.lam} exceeds 1/(2(m+M))={cap}; step map may not be monotone")


def density_propagate_1d(ds, ds_prime, reg: RegularizerSpec, p: PrivacyParams, x0: float, grid: GridSpec = GridSpec()):
    """Laws of ``X_T`` and ``X'_T`` for two 1-D datasets, started at ``x0``.

    Raises:
      ValueError: for ``sigma == 0``, non-monotone step maps, or a grid that
        loses more than ``1e-10`` of mass to truncation.
    """
    if not p.sigma > 0:
        raise ValueError("sigma must be positive; the noise kernel is degenerate")
    for d in (ds, ds_prime):
        check_monotone(d, p)
    if not reg.contains(np.array([x0])):
        raise ValueError("x0 lies outside dom h")
    P = _propagate(ds, reg, p, x0, grid)
    Q = P if ds_prime is ds else _propagate(ds_prime, reg, p, x0, grid)
    return P, Q


def _atom_pairs(P, Q):
    return [(P.atom_lo, Q.atom_lo), (P.atom_hi, Q.atom_hi), (P.atom_zero, Q.atom_zero)]


def renyi_divergence_grid(P: DensityGrid, Q: DensityGrid, alpha: float, tol: float = TRUNCATION_TOL) -> float:
    """``D_alpha(P || Q)`` by grid quadrature plus atom terms.

    Both laws are renormalized first. ``q`` is floored at ``1e-300``; if
    more than ``tol`` of ``P``'s mass sits where ``Q`` is below the floor the
    result is ``inf``.
    """
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if not P.same_support(Q):
        raise ValueError("grids differ")
    w = P.weights
    mp, mq = P.mass(), Q.mass()
    p = P.density / mp
    q = Q.density / mq
    atoms = [(a / mp, b / mq) for a, b in _atom_pairs(P, Q)]

    orphan = float(w[(p > 0) & (q < _Q_FLOOR)] @ p[(p > 0) & (q < _Q_FLOOR)])
    orphan += sum(a for a, b in atoms if a > 0 and b == 0)
    if orphan > tol:
        return math.inf

    live = p > 0
    log_terms = [
        np.log(w[live]) + alpha * np.log(p[live]) + (1.0 - alpha) * np.log(np.maximum(q[live], _Q_FLOOR))
    ]
    for a, b in atoms:
        if a > 0 and b > 0:
            log_terms.append(np.array([alpha * math.log(a) + (1.0 - alpha) * math.log(b)]))
    log_total = special.logsumexp(np.concatenate(log_terms))
    return max(0.0, float(log_total) / (alpha - 1.0))


def kl_divergence_grid(P: DensityGrid, Q: DensityGrid) -> float:
    """``KL(P || Q)``, the ``alpha -> 1`` limit, for cross-checks."""
    if not P.same_support(Q):
        raise ValueError("grids differ")
    w = P.weights
    p = P.density / P.mass()
    q = np.maximum(Q.density / Q.mass(), _Q_FLOOR)
    live = p > 0
    total = float(w[live] @ (p[live] * np.log(p[live] / q[live])))
    for a, b in _atom_pairs(P, Q):
        if a > 0:
            total += a / P.mass() * math.log((a / P.mass()) / max(b / Q.mass(), _Q_FLOOR))
    return total


def gaussian_grid(mean, std, lo, hi, n_cells) -> DensityGrid:
    """A normal density sampled on a grid (test fixture and sanity oracle)."""
    z = np.linspace(lo, hi, n_cells + 1)
    dens = np.exp(-0.5 * ((z - mean) / std) ** 2) / (std * math.sqrt(2.0 * math.pi))
    return DensityGrid(lo, hi, n_cells, dens)


def renyi_edge_fraction(P: DensityGrid, Q: DensityGrid, alpha: float, frac: float = 0.02) -> float:
    """Share of the Renyi integrand living in the outer ``frac`` of the grid.

    A large share means the integrand peak (which drifts outward as alpha
    grows) is being cut off by the support.
    """
    p = P.density / P.mass()
    q = np.maximum(Q.density / Q.mass(), _Q_FLOOR)
    live = p > 0
    if not live.any():
        return 0.0
    log_terms = np.full(p.size, -np.inf)
    log_terms[live] = alpha * np.log(p[live]) + (1.0 - alpha) * np.log(q[live])
    edge = max(1, int(frac * p.size))
    total = special.logsumexp(log_terms)
    outer = special.logsumexp(np.concatenate([log_terms[:edge], log_terms[-edge:]]))
    return float(np.exp(outer - total))


EDGE_TOL = 1e-12


def oracle_divergence(ds, ds_prime, reg, p, x0, grid: GridSpec = GridSpec(), max_widen: int = 8):
    """Grid Renyi divergence of the two last iterates, widening the support as needed.

    Returns:
      ``(divergence, grid_spec_used, P, Q)``.
    """
    spec = grid
    for _ in range(max_widen + 1):
        lo, hi = _support(reg, p, x0, spec)
        try:
            P, Q = density_propagate_1d(ds, ds_prime, reg, p, x0, spec)
        except TruncationError:
            P = Q = None
        if P is not None:
            D = renyi_divergence_grid(P, Q, p.alpha)
            if reg.kind == "ball" or math.isinf(D) or renyi_edge_fraction(P, Q, p.alpha) <= EDGE_TOL:
                return D, spec, P, Q
        spec = dataclasses.replace(spec, extra=spec.extra + 0.25 * (hi - lo))
    raise ValueError("Renyi integrand still truncated after widening the support")
