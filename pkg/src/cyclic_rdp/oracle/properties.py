"""Sampling-based checks of the operator inequalities the bounds rest on."""

import numpy as np

from cyclic_rdp.sim import (
    RegularizerSpec,
    batch_indices,
    clip_rows,
    differing_indices,
    first_use_step,
    prox_linear_map,
    prox_regularizer,
)


def _project(reg, X):
    if reg is None or reg.kind != "ball":
        return X
    return clip_rows(X, reg.radius)


def sample_pairs(rng, n_pairs, dim, scale, reg=None):
    """Half broad independent pairs, half tight pairs ``|x - y|`` in ``[1e-6, 1e-3]``."""
    n_broad = n_pairs // 2
    n_tight = n_pairs - n_broad
    X = scale * rng.standard_normal((n_pairs, dim))
    Y = np.empty_like(X)
    Y[:n_broad] = scale * rng.standard_normal((n_broad, dim))
    u = rng.standard_normal((n_tight, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    radius = 10.0 ** rng.uniform(-6.0, -3.0, size=(n_tight, 1))
    Y[n_broad:] = X[n_broad:] + radius * u
    X, Y = _project(reg, X), _project(reg, Y)
    keep = np.any(X != Y, axis=1)
    return X[keep], Y[keep]


def lipschitz_ratios(ds, reg, lam, C, n_pairs, seed, batch=None, scale=2.0):
    """``|A(x) - A(y)| / |x - y|`` over sampled pairs for the full-batch (or given) step."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be positive")
    batch = list(range(1, ds.k + 1)) if batch is None else list(batch)
    rng = np.random.default_rng(seed)
    X, Y = sample_pairs(rng, n_pairs, ds.dim, scale, reg)
    if lam == 0:
        return np.ones(len(X))
    step = prox_linear_map(ds, batch, lam, C)
    num = np.linalg.norm(step(X) - step(Y), axis=1)
    return num / np.linalg.norm(X - Y, axis=1)


def empirical_lipschitz(ds, reg, lam, C, n_pairs, seed, batch=None, scale=2.0) -> float:
    """Largest observed Lipschitz ratio of the clipped prox-linear step."""
    return float(np.max(lipschitz_ratios(ds, reg, lam, C, n_pairs, seed, batch, scale)))


def additive_excess(ds, lam, C, n_pairs, seed, scale=2.0) -> float:
    """``max |A(x) - A(y)| - |x - y| - 2 lam C``; nonpositive when the additive bound holds."""
    rng = np.random.default_rng(seed)
    X, Y = sample_pairs(rng, n_pairs, ds.dim, scale)
    step = prox_linear_map(ds, range(1, ds.k + 1), lam, C)
    gap = np.linalg.norm(step(X) - step(Y), axis=1) - np.linalg.norm(X - Y, axis=1)
    return float(np.max(gap - 2.0 * lam * C))


def neighbor_displacement(ds, ds_prime, lam, C, b, n_samples, seed, scale=3.0) -> float:
    """Largest ``|phi(x) - phi'(x)|`` at the step that first consumes the swapped record."""
    diff = differing_indices(ds, ds_prime)
    if len(diff) > 1:
        raise ValueError("datasets are not neighbors")
    if not diff:
        return 0.0
    if ds.k % b:
        raise ValueError("k must be a multiple of b")
    t_star = first_use_step(diff[0], b)
    batch = batch_indices(t_star, b, ds.k)
    rng = np.random.default_rng(seed)
    X = scale * rng.standard_normal((n_samples, ds.dim))
    phi = prox_linear_map(ds, batch, lam, C)
    phi_prime = prox_linear_map(ds_prime, batch, lam, C)
    return float(np.max(np.linalg.norm(phi(X) - phi_prime(X), axis=1)))


def cocoercivity_excess(ds, n_pairs, seed, scale=2.0) -> float:
    """Largest violation of the weakly-convex co-coercivity inequality.

    Checks ``<g(x)-g(y), x-y> >= -(m + m^2/(2(M+m))) |x-y|^2 + |g(x)-g(y)|^2 / (2(M+m))``
    for every component; returns ``max(rhs - lhs)``, relative to ``|x-y|^2``.
    """
    m, M = ds.declared_m, ds.declared_M
    rng = np.random.default_rng(seed)
    X, Y = sample_pairs(rng, n_pairs, ds.dim, scale)
    D = X - Y
    d2 = np.sum(D * D, axis=1)
    worst = -np.inf
    for i in range(ds.k):
        G = D @ ds.A[i].T
        lhs = np.sum(G * D, axis=1)
        rhs = -(m + m * m / (2.0 * (M + m))) * d2 + np.sum(G * G, axis=1) / (2.0 * (M + m))
        worst = max(worst, float(np.max((rhs - lhs) / d2)))
    return worst


def prox_excess(reg_or_clip, lam, n_pairs, seed, dim=3, scale=2.0) -> dict:
    """Violations of the two prox inequalities for ``Delta = u - v``.

    ``firm``: ``|Dp|^2 - <D, Dp>``; ``pythag``: ``|Dp - D|^2 - (|D|^2 - |Dp|^2)``.
    Both are nonpositive for a prox of a closed convex function. Pass a
    :class:`RegularizerSpec` or a float clip norm.
    """
    rng = np.random.default_rng(seed)
    U = scale * rng.standard_normal((n_pairs, dim))
    V = scale * rng.standard_normal((n_pairs, dim))
    if isinstance(reg_or_clip, RegularizerSpec):
        prox = lambda Z: np.array([prox_regularizer(reg_or_clip, lam, z) for z in Z])  # noqa: E731
    else:
        prox = lambda Z: clip_rows(Z, float(reg_or_clip))  # noqa: E731
    Dl = U - V
    Dp = prox(U) - prox(V)
    norm_d = np.sum(Dl * Dl, axis=1)
    scale_ = np.maximum(norm_d, 1e-300)
    firm = np.sum(Dp * Dp, axis=1) - np.sum(Dl * Dp, axis=1)
    pythag = np.sum((Dp - Dl) ** 2, axis=1) - (norm_d - np.sum(Dp * Dp, axis=1))
    return {"firm": float(np.max(firm / scale_)), "pythag": float(np.max(pythag / scale_))}
