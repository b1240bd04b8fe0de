"""Reference implementation of cyclically-sampled, clipped DP-SGD.

Component losses are quadratics ``f_i(x) = x^T A_i x / 2 + c_i^T x`` so that
gradients are exact and curvature constants are certified by an
eigenvalue check. Batch indices in the public API are 1-based, matching
``B_t = {j_t + 1, ..., j_t + b}`` with ``j_t = b (t - 1) mod k``.
"""

import dataclasses
import math
from typing import Optional

import numpy as np

from cyclic_rdp.accountant import PrivacyParams

# Slack for the eigenvalue envelope check.
ENVELOPE_TOL = 1e-9


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclasses.dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """``k`` quadratic losses whose Hessians lie in ``[-declared_m, declared_M]``.

    Attributes:
      A: Array of shape ``(k, dim, dim)``, symmetric slices.
      c: Array of shape ``(k, dim)``.
      declared_m, declared_M: Curvature envelope, validated on construction.
      neighbor_index: 1-based index of the record that was swapped, when the
        dataset was produced by :func:`make_neighbor`.
    """

    A: np.ndarray
    c: np.ndarray
    declared_m: float
    declared_M: float
    neighbor_index: Optional[int] = None

    def __post_init__(self):
        A = _frozen(self.A)
        c = _frozen(self.c)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError(f"A must have shape (k, n, n), got {A.shape}")
        if c.shape != A.shape[:2]:
            raise ValueError(f"c must have shape {A.shape[:2]}, got {c.shape}")
        if not np.allclose(A, np.swapaxes(A, 1, 2), rtol=0, atol=1e-12):
            raise ValueError("every A_i must be symmetric")
        if self.declared_m < 0 or self.declared_M < 0:
            raise ValueError("declared curvature must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)
        lo, hi = spectral_range(A)
        if lo < -self.declared_m - ENVELOPE_TOL or hi > self.declared_M + ENVELOPE_TOL:
            raise ValueError(
                f"eigenvalues in [{lo}, {hi}] leave the envelope "
                f"[-{self.declared_m}, {self.declared_M}]"
            )

    @property
    def k(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def gradient(self, i: int, x) -> np.ndarray:
        """Gradient of the 1-based component ``i`` at ``x``."""
        return self.A[i - 1] @ x + self.c[i - 1]

    def gradients(self, batch, x) -> np.ndarray:
        """Stacked gradients ``(|batch|, dim)`` for 1-based indices."""
        idx = np.asarray(list(batch), dtype=int) - 1
        return np.einsum("bij,j->bi", self.A[idx], x) + self.c[idx]


def spectral_range(A) -> tuple:
    """Smallest and largest eigenvalue over a stack of symmetric matrices."""
    eig = np.linalg.eigvalsh(np.asarray(A, dtype=float))
    return float(eig.min()), float(eig.max())


@dataclasses.dataclass(frozen=True)
class RegularizerSpec:
    """A convex regularizer ``h`` with a closed-form prox.

    ``kind`` is ``"zero"``, ``"l1"`` (``h = weight * ||x||_1``) or ``"ball"``
    (indicator of the radius-``radius`` Euclidean ball).
    """

    kind: str = "zero"
    weight: float = 0.0
    radius: float = math.inf

    def __post_init__(self):
        if self.kind not in ("zero", "l1", "ball"):
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.kind == "l1" and not self.weight > 0:
            raise ValueError("l1 weight must be positive")
        if self.kind == "ball" and not 0 < self.radius < math.inf:
            raise ValueError("ball radius must be positive and finite")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def l1(cls, weight):
        return cls("l1", weight=float(weight))

    @classmethod
    def ball(cls, radius):
        return cls("ball", radius=float(radius))

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius if self.kind == "ball" else math.inf

    def contains(self, x, tol=1e-12) -> bool:
        if self.kind != "ball":
            return True
        return float(np.linalg.norm(x)) <= self.radius * (1.0 + tol)


def clip(y, C):
    """Projection onto the radius-``C`` ball (per-example gradient clipping)."""
    y = np.asarray(y, dtype=float)
    norm = np.linalg.norm(y)
    if norm <= C:
        return y
    return y * (C / norm)


def clip_rows(Y, C):
    """Row-wise :func:`clip` for a ``(n, dim)`` array."""
    Y = np.asarray(Y, dtype=float)
    norms = np.linalg.norm(Y, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > C, C / norms, 1.0)
    return Y * scale


def prox_regularizer(spec: RegularizerSpec, lam: float, z):
    """``prox_{lam h}(z)``."""
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    z = np.asarray(z, dtype=float)
    if spec.kind == "zero":
        return z
    if spec.kind == "l1":
        t = lam * spec.weight
        return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
    return clip(z, spec.radius)


def batch_indices(t: int, b: int, k: int) -> list:
    """1-based indices of the batch consumed at step ``t >= 1``."""
    j = (b * (t - 1)) % k
    return list(range(j + 1, j + b + 1))


def first_use_step(i_star: int, b: int) -> int:
    """``t* = inf{t : i_star in B_t}``, the step whose batch first holds ``i_star``."""
    return (i_star - 1) // b + 1


def prox_linear_step(x, ds: SyntheticDataset, batch, lam: float, C: float):
    """``x - (lam / |B|) sum_{i in B} clip(grad f_i(x), C)``."""
    batch = list(batch)
    if not batch:
        raise ValueError("batch must be nonempty")
    x = np.asarray(x, dtype=float)
    g = clip_rows(ds.gradients(batch, x), C)
    return x - lam * g.sum(axis=0) / len(batch)


def prox_linear_map(ds: SyntheticDataset, batch, lam: float, C: float):
    """Vectorized prox-linear step over points ``X`` of shape ``(n_points, dim)``."""
    idx = np.asarray(list(batch), dtype=int) - 1
    A = ds.A[idx]
    c = ds.c[idx]

    def step(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        G = np.einsum("bij,pj->pbi", A, X) + c[None]
        return X - lam * clip_rows(G, C).sum(axis=1) / len(idx)

    return step


@dataclasses.dataclass(frozen=True, eq=False)
class Trajectory:
    """Iterates ``X_0 .. X_T`` of one run, as an array ``(T + 1, dim)``."""

    iterates: np.ndarray
    noise_seed: int
    params: PrivacyParams

    @property
    def last(self) -> np.ndarray:
        return self.iterates[-1]


def step_noise(seed: int, t: int, dim: int, sigma: float) -> np.ndarray:
    """Noise ``N_t``, a pure function of ``(seed, t)``.

    Each step draws from its own generator keyed on the pair, so two runs
    with the same seed see the same ``N_t`` whatever else they compute.
    """
    rng = np.random.default_rng([int(seed), int(t)])
    return sigma * rng.standard_normal(dim)


def run_dp_sgd(ds: SyntheticDataset, reg: RegularizerSpec, p: PrivacyParams, x0, seed: int) -> Trajectory:
    """Runs ``T`` steps of cyclic DP-SGD and returns every iterate."""
    if p.k != ds.k:
        raise ValueError(f"params have k={p.k} but the dataset has {ds.k} records")
    x = np.asarray(x0, dtype=float).reshape(ds.dim)
    if not reg.contains(x):
        raise ValueError("x0 lies outside dom h")
    iterates = np.empty((p.T + 1, ds.dim))
    iterates[0] = x
    for t in range(1, p.T + 1):
        batch = batch_indices(t, p.b, p.k)
        g = clip_rows(ds.gradients(batch, x), p.C).sum(axis=0) / p.b
        x = prox_regularizer(reg, p.lam, x - p.lam * g + step_noise(seed, t, ds.dim, p.sigma))
        iterates[t] = x
    iterates.setflags(write=False)
    return Trajectory(iterates, int(seed), p)


def make_neighbor(ds: SyntheticDataset, i_star: int, replacement) -> SyntheticDataset:
    """Swaps record ``i_star`` (1-based) for ``replacement = (A, c)``."""
    if not 1 <= i_star <= ds.k:
        raise ValueError(f"i_star must lie in [1, {ds.k}], got {i_star}")
    A_new, c_new = replacement
    A_new = np.asarray(A_new, dtype=float).reshape(ds.dim, ds.dim)
    c_new = np.asarray(c_new, dtype=float).reshape(ds.dim)
    lo, hi = spectral_range(A_new[None])
    if lo < -ds.declared_m - ENVELOPE_TOL or hi > ds.declared_M + ENVELOPE_TOL:
        raise ValueError("replacement leaves the curvature envelope")
    A = np.array(ds.A)
    c = np.array(ds.c)
    A[i_star - 1] = A_new
    c[i_star - 1] = c_new
    return SyntheticDataset(A, c, ds.declared_m, ds.declared_M, neighbor_index=i_star)


def differing_indices(ds: SyntheticDataset, ds_prime: SyntheticDataset) -> list:
    """1-based indices where two datasets of equal shape differ."""
    if ds.A.shape != ds_prime.A.shape:
        raise ValueError("datasets differ in shape")
    diff = np.any(ds.A != ds_prime.A, axis=(1, 2)) | np.any(ds.c != ds_prime.c, axis=1)
    return [int(i) + 1 for i in np.flatnonzero(diff)]


def run_pair(ds, ds_prime, reg, p, x0, seed):
    """Runs both neighbors on the identical noise sequence."""
    if len(differing_indices(ds, ds_prime)) > 1:
        raise ValueError("datasets differ in more than one record")
    return run_dp_sgd(ds, reg, p, x0, seed), run_dp_sgd(ds_prime, reg, p, x0, seed)


def first_divergence_index(traj: Trajectory, traj_prime: Trajectory) -> Optional[int]:
    """First ``t`` with ``X_t != X'_t``, or None if the runs never separate."""
    neq = np.any(traj.iterates != traj_prime.iterates, axis=1)
    hits = np.flatnonzero(neq)
    return int(hits[0]) if hits.size else None


def _random_orthogonal(rng, dim):
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def generate_quadratic_dataset(dim: int, k: int, m: float, M: float, seed: int) -> SyntheticDataset:
    """Random quadratics with Hessian spectra in ``[-m, M]`` that touch both ends."""
    if m < 0 or M < 0 or m + M == 0:
        raise ValueError("need m, M >= 0 with m + M > 0")
    if dim < 1 or k < 1:
        raise ValueError("dim and k must be positive")
    rng = np.random.default_rng(seed)
    eigs = rng.uniform(-m, M, size=(k, dim))
    # Pin the envelope ends: first record's first eigenvalue at -m, then the
    # next free slot at M.
    eigs[0, 0] = -m
    if dim > 1:
        eigs[0, 1] = M
    elif k > 1:
        eigs[1, 0] = M
    elif m == 0:
        eigs[0, 0] = M
    A = np.empty((k, dim, dim))
    for i in range(k):
        Q = _random_orthogonal(rng, dim)
        A[i] = (Q * eigs[i]) @ Q.T
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    c = rng.standard_normal((k, dim))
    return SyntheticDataset(A, c, float(m), float(M))
