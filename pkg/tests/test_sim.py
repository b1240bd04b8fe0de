import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclic_rdp.accountant import PrivacyParams
from cyclic_rdp.sim import (
    RegularizerSpec,
    SyntheticDataset,
    batch_indices,
    clip,
    clip_rows,
    differing_indices,
    first_divergence_index,
    first_use_step,
    generate_quadratic_dataset,
    make_neighbor,
    prox_linear_map,
    prox_linear_step,
    prox_regularizer,
    run_dp_sgd,
    run_pair,
    spectral_range,
    step_noise,
)


def one_d(a_values, c_values, m=0.0, M=1.0):
    A = np.asarray(a_values, dtype=float).reshape(-1, 1, 1)
    c = np.asarray(c_values, dtype=float).reshape(-1, 1)
    return SyntheticDataset(A, c, m, M)


def params(**kw):
    base = dict(alpha=2.0, sigma=0.5, lam=0.1, C=1.0, b=1, k=4, T=8)
    base.update(kw)
    return PrivacyParams(**base)


def test_clip_examples():
    np.testing.assert_array_equal(clip([3.0, 4.0], 10.0), [3.0, 4.0])
    np.testing.assert_allclose(clip([3.0, 4.0], 1.0), [0.6, 0.8], rtol=1e-15)
    np.testing.assert_array_equal(clip([0.0, 0.0], 2.0), [0.0, 0.0])
    np.testing.assert_array_equal(clip([1.0, 1.0], math.inf), [1.0, 1.0])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6), st.floats(1e-3, 1e3))
def test_clip_norm_bound_and_rows(y, C):
    y = np.array(y)
    out = clip(y, C)
    assert np.linalg.norm(out) <= C * (1 + 1e-12)
    np.testing.assert_allclose(clip_rows(y[None], C)[0], out, rtol=1e-15, atol=0)


def test_prox_regularizer_examples():
    np.testing.assert_allclose(prox_regularizer(RegularizerSpec.l1(1.0), 0.5, [1.0, -0.3]), [0.5, 0.0])
    np.testing.assert_allclose(prox_regularizer(RegularizerSpec.ball(1.0), 3.0, [0.0, 2.0]), [0.0, 1.0])
    np.testing.assert_array_equal(prox_regularizer(RegularizerSpec.zero(), 0.2, [1.5, -2.0]), [1.5, -2.0])
    with pytest.raises(ValueError):
        prox_regularizer(RegularizerSpec.zero(), 0.0, [1.0])


def test_regularizer_spec_validation():
    with pytest.raises(ValueError):
        RegularizerSpec("huber")
    with pytest.raises(ValueError):
        RegularizerSpec.l1(0.0)
    with pytest.raises(ValueError):
        RegularizerSpec.ball(math.inf)
    assert RegularizerSpec.ball(1.5).diameter == 3.0
    assert RegularizerSpec.l1(1.0).diameter == math.inf


@settings(max_examples=200)
@given(
    st.sampled_from([RegularizerSpec.zero(), RegularizerSpec.l1(0.7), RegularizerSpec.ball(1.2)]),
    st.floats(0.01, 3.0),
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
)
def test_prox_nonexpansive(reg, lam, u, v):
    pu, pv = prox_regularizer(reg, lam, u), prox_regularizer(reg, lam, v)
    assert np.linalg.norm(pu - pv) <= np.linalg.norm(np.subtract(u, v)) * (1 + 1e-12) + 1e-12


def test_prox_linear_step_examples():
    ds = one_d([1.0], [0.0])
    assert prox_linear_step([2.0], ds, [1], 0.1, 10.0)[0] == pytest.approx(1.8, rel=1e-15)
    assert prox_linear_step([2.0], ds, [1], 0.1, 1.0)[0] == pytest.approx(1.9, rel=1e-15)
    zero = one_d([0.0, 0.0], [0.0, 0.0])
    assert prox_linear_step([0.7], zero, [1, 2], 0.5, 1.0)[0] == 0.7
    with pytest.raises(ValueError):
        prox_linear_step([0.7], zero, [], 0.5, 1.0)


def test_prox_linear_map_matches_step():
    ds = generate_quadratic_dataset(3, 4, 0.5, 1.0, 0)
    X = np.random.default_rng(0).standard_normal((10, 3)) * 3
    step = prox_linear_map(ds, [2, 3], 0.2, 0.8)
    expected = np.array([prox_linear_step(x, ds, [2, 3], 0.2, 0.8) for x in X])
    np.testing.assert_allclose(step(X), expected, rtol=1e-14, atol=1e-14)


def test_batches_are_cyclic_and_one_based():
    assert batch_indices(1, 2, 6) == [1, 2]
    assert batch_indices(3, 2, 6) == [5, 6]
    assert batch_indices(4, 2, 6) == [1, 2]
    assert first_use_step(1, 1) == 1
    assert first_use_step(4, 1) == 4
    assert first_use_step(3, 2) == 2


def test_run_dp_sgd_examples():
    ds = one_d([1.0], [0.0])
    p = PrivacyParams(alpha=2.0, sigma=0.0, lam=0.1, C=math.inf, b=1, k=1, T=3)
    tr = run_dp_sgd(ds, RegularizerSpec.zero(), p, [1.0], seed=0)
    assert tr.last[0] == pytest.approx(0.729, rel=1e-14)
    p0 = PrivacyParams(alpha=2.0, sigma=1.0, lam=0.1, C=1.0, b=1, k=1, T=0)
    tr0 = run_dp_sgd(ds, RegularizerSpec.zero(), p0, [0.3], seed=0)
    np.testing.assert_array_equal(tr0.iterates, [[0.3]])


def test_run_dp_sgd_deterministic_and_in_domain():
    ds = generate_quadratic_dataset(4, 6, 0.5, 1.0, 1)
    p = params(k=6, b=2, T=30, sigma=2.0)
    reg = RegularizerSpec.ball(1.0)
    a = run_dp_sgd(ds, reg, p, np.zeros(4), seed=11)
    b = run_dp_sgd(ds, reg, p, np.zeros(4), seed=11)
    assert a.iterates.tobytes() == b.iterates.tobytes()
    assert np.all(np.linalg.norm(a.iterates[1:], axis=1) <= 1.0 + 1e-12)
    c = run_dp_sgd(ds, reg, p, np.zeros(4), seed=12)
    assert not np.array_equal(a.iterates, c.iterates)


def test_run_dp_sgd_rejects():
    ds = generate_quadratic_dataset(2, 4, 0.5, 1.0, 1)
    with pytest.raises(ValueError):
        run_dp_sgd(ds, RegularizerSpec.ball(1.0), params(), [2.0, 0.0], seed=0)
    with pytest.raises(ValueError):
        run_dp_sgd(ds, RegularizerSpec.zero(), params(k=2), [0.0, 0.0], seed=0)


def test_noise_is_keyed_on_seed_and_step():
    np.testing.assert_array_equal(step_noise(3, 5, 4, 1.0), step_noise(3, 5, 4, 1.0))
    assert not np.array_equal(step_noise(3, 5, 4, 1.0), step_noise(3, 6, 4, 1.0))
    np.testing.assert_allclose(step_noise(3, 5, 4, 2.0), 2.0 * step_noise(3, 5, 4, 1.0), rtol=1e-15)


def test_dataset_validation():
    with pytest.raises(ValueError):
        one_d([2.0], [0.0], m=0.0, M=1.0)
    with pytest.raises(ValueError):
        SyntheticDataset(np.array([[[0.0, 1.0], [0.0, 0.0]]]), np.zeros((1, 2)), 1.0, 1.0)
    with pytest.raises(ValueError):
        SyntheticDataset(np.zeros((1, 2, 2)), np.zeros((2, 2)), 1.0, 1.0)
    ds = one_d([0.5], [1.0])
    with pytest.raises(ValueError):
        ds.A[0, 0, 0] = 3.0


@pytest.mark.parametrize("dim, m, M", [(1, 0.0, 1.0), (3, 0.0, 2.0), (3, 1.0, 0.0), (5, 0.5, 3.0), (2, 2.0, 2.0)])
def test_generated_dataset_attains_envelope(dim, m, M):
    ds = generate_quadratic_dataset(dim, 5, m, M, 4)
    lo, hi = spectral_range(ds.A)
    assert lo == pytest.approx(-m, abs=1e-9)
    assert hi == pytest.approx(M, abs=1e-9)
    if m == 0:
        assert lo >= -1e-9
    if M == 0:
        assert hi <= 1e-9


def test_make_neighbor_and_tstar():
    ds = generate_quadratic_dataset(2, 4, 0.5, 1.0, 0)
    other = generate_quadratic_dataset(2, 1, 0.5, 1.0, 9)
    nb = make_neighbor(ds, 3, (other.A[0], other.c[0]))
    assert differing_indices(ds, nb) == [3]
    assert nb.neighbor_index == 3
    assert first_use_step(nb.neighbor_index, 2) == 2
    with pytest.raises(ValueError):
        make_neighbor(ds, 1, (np.eye(2) * 5.0, np.zeros(2)))
    with pytest.raises(ValueError):
        make_neighbor(ds, 5, (other.A[0], other.c[0]))


def test_run_pair_identical_datasets():
    ds = generate_quadratic_dataset(2, 4, 0.5, 1.0, 0)
    a, b = run_pair(ds, ds, RegularizerSpec.zero(), params(), np.zeros(2), 3)
    assert first_divergence_index(a, b) is None


def test_run_pair_unused_record():
    ds = generate_quadratic_dataset(2, 4, 0.5, 1.0, 0)
    other = generate_quadratic_dataset(2, 1, 0.5, 1.0, 5)
    nb = make_neighbor(ds, 4, (other.A[0], other.c[0]))
    a, b = run_pair(ds, nb, RegularizerSpec.zero(), params(T=3), np.zeros(2), 3)
    assert first_divergence_index(a, b) is None


def test_run_pair_rejects_non_neighbors():
    ds = generate_quadratic_dataset(2, 4, 0.5, 1.0, 0)
    other = generate_quadratic_dataset(2, 4, 0.5, 1.0, 1)
    with pytest.raises(ValueError):
        run_pair(ds, other, RegularizerSpec.zero(), params(), np.zeros(2), 0)


@pytest.mark.parametrize("i_star, b, k", [(1, 1, 4), (3, 1, 4), (3, 2, 4), (6, 3, 6)])
def test_first_divergence_is_tstar(i_star, b, k):
    # The differing record first moves X_{t*} itself.
    ds = generate_quadratic_dataset(2, k, 0.5, 1.0, 0)
    nb = make_neighbor(ds, i_star, (np.zeros((2, 2)), np.array([5.0, -5.0])))
    p = params(b=b, k=k, T=2 * k)
    a, b_ = run_pair(ds, nb, RegularizerSpec.zero(), p, np.zeros(2), 1)
    t_star = first_use_step(i_star, b)
    assert first_divergence_index(a, b_) == t_star
    np.testing.assert_array_equal(a.iterates[:t_star], b_.iterates[:t_star])


def test_per_step_gap_one_d():
    # sigma = 0: the per-step map gap is 2 lam C / b where i* is in the batch, 0 elsewhere.
    ds = one_d([0.0, 0.5, 0.2, 0.0], [10.0, 0.1, -0.3, 0.4])
    nb = make_neighbor(ds, 1, (np.zeros((1, 1)), [-10.0]))
    lam, C, b, k = 0.3, 1.0, 2, 4
    x = np.linspace(-3, 3, 50)[:, None]
    for t in range(1, 5):
        batch = batch_indices(t, b, k)
        gap = np.abs(prox_linear_map(ds, batch, lam, C)(x) - prox_linear_map(nb, batch, lam, C)(x))
        expected = 2 * lam * C / b if 1 in batch else 0.0
        np.testing.assert_allclose(gap, expected, rtol=1e-13, atol=1e-15)
