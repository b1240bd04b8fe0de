"""Brute-force solver for the single-pass residual allocation problem.

    minimize    sum_i a_i**2 / 2
    subject to  Rt_t = L**(t-1) (L tau + s) - sum_{i<=t} a_i L**(t-i) >= 0,  t < T
                Rt_T = 0

Every subset of the ``T - 1`` inequalities is tried as the active set; each
candidate is a minimum-norm solve of the active equalities, and a
candidate is accepted when it is primal feasible and its multipliers have
the right sign. Only meant for small ``T``.
"""

import itertools

import numpy as np

MAX_T = 12
_FEAS_TOL = 1e-10


def constraint_system(L, T, tau, s):
    """Rows ``G`` and offsets ``h`` with ``Rt = h - G a``."""
    t = np.arange(1, T + 1)
    G = np.where(t[:, None] >= t[None, :], float(L) ** (t[:, None] - t[None, :]), 0.0)
    h = float(L) ** (t - 1) * (L * tau + s)
    return G, h


def residuals(a, L, tau, s):
    """Unnormalized leftover shifts ``Rt_t`` for a payment vector ``a``."""
    G, h = constraint_system(L, len(a), tau, s)
    return h - G @ np.asarray(a, dtype=float)


def qp_candidates(L, T, tau, s):
    """All KKT candidates, as ``(a, active_set, primal_ok, dual_ok)`` tuples."""
    if not 1 <= T <= MAX_T:
        raise ValueError(f"T must lie in [1, {MAX_T}], got {T}")
    if L < 1 or tau < 0 or s < 0:
        raise ValueError("need L >= 1 and tau, s >= 0")
    G, h = constraint_system(L, T, tau, s)
    scale = max(1.0, float(np.max(np.abs(h))))
    out = []
    for r in range(T):
        for active in itertools.combinations(range(T - 1), r):
            rows = list(active) + [T - 1]
            Ga = G[rows]
            y = np.linalg.solve(Ga @ Ga.T, h[rows])
            a = Ga.T @ y
            primal_ok = bool(np.all(h - G @ a >= -_FEAS_TOL * scale))
            # Stationarity gives a = -sum_j mu_j g_j with mu_j >= 0 on the
            # active inequalities g_j^T a <= h_j, i.e. y_j <= 0.
            dual_ok = bool(np.all(y[:-1] <= _FEAS_TOL * scale))
            out.append((a, active, primal_ok, dual_ok))
    return out


def qp_residual_oracle(L, T, tau, s):
    """Minimizer of the residual allocation problem by active-set enumeration."""
    best = None
    for a, _, primal_ok, dual_ok in qp_candidates(L, T, tau, s):
        if primal_ok and dual_ok:
            value = 0.5 * float(a @ a)
            if best is None or value < best[0]:
                best = (value, a)
    if best is None:
        raise RuntimeError("no KKT point found")
    return best[1]
