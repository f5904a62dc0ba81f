import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from stostokes.stochastic import (
    LinearNoise,
    WienerPath,
    coarse_increments,
    generate_path,
    generate_paths,
    milstein_weight,
    standard_normals,
)


def test_same_seed_bit_identical():
    a = generate_path(123, 2048)
    b = generate_path(123, 2048)
    assert a.increments.tobytes() == b.increments.tobytes()


def test_sample_addressable_without_predecessors():
    block = generate_paths(9, range(5), 256)
    alone = generate_path(9, 256, sample=3).increments
    assert np.array_equal(block[:, 3], alone)


def test_documented_transform_reproduces_path():
    """Re-derive the increments from the raw Philox stream with plain math."""
    seed, sample, M0 = 77, 4, 10
    raw = np.random.Philox(key=seed | (sample << 64)).random_raw(M0)
    z = []
    for w0, w1 in zip(raw[0::2], raw[1::2]):
        u0 = (int(w0) >> 11) * 2.0**-53
        u1 = (int(w1) >> 11) * 2.0**-53
        r = math.sqrt(-2.0 * math.log1p(-u0))
        z += [r * math.cos(2 * math.pi * u1), r * math.sin(2 * math.pi * u1)]
    inc = generate_path(seed, M0, 1.0, sample).increments
    np.testing.assert_allclose(inc, np.sqrt(1.0 / M0) * np.array(z), rtol=1e-15, atol=0)


def test_single_step_path():
    p = generate_path(5, 1, 1.0)
    assert p.increments.shape == (1,)
    assert p.increments[0] == standard_normals(5, 0, 1)[0]


@pytest.mark.parametrize("kw", [dict(M0=0), dict(T=0.0), dict(T=-1.0)])
def test_generate_rejects(kw):
    with pytest.raises(ValueError):
        generate_path(1, **kw)


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        generate_path(-1, 8)


@pytest.fixture(scope="module")
def pooled():
    # 10^5 increments at T/M0 = 1/2048 from 49 samples of one seed
    inc = generate_paths(2024, range(49), 2048).ravel()[:100_000]
    return inc


def test_increment_mean(pooled):
    k = 1 / 2048
    sigma = math.sqrt(k)
    assert abs(pooled.mean()) <= 4 * sigma / math.sqrt(pooled.size)


def test_increment_variance(pooled):
    ratio = pooled.var(ddof=1) / (1 / 2048)
    assert 0.97 <= ratio <= 1.03


def test_ks_normalised(pooled):
    z = pooled[:10_000] * math.sqrt(2048)
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_seed_independence():
    a = generate_path(500, 2048).increments
    b = generate_path(501, 2048).increments
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05


def test_milstein_weight_examples():
    k = 1 / 64
    assert milstein_weight(math.sqrt(k), k) == pytest.approx(0.0, abs=1e-18)
    assert milstein_weight(0.0, k) == -k / 2
    with pytest.raises(ValueError):
        milstein_weight(0.1, 0.0)


def test_milstein_weight_mean(pooled):
    k = 1 / 2048
    w = milstein_weight(pooled, k)
    sd = math.sqrt(k * k / 2)
    assert abs(w.mean()) <= 4 * sd / math.sqrt(w.size)


def test_coarsen_identity_and_terminal():
    p = generate_path(3, 64)
    np.testing.assert_array_equal(coarse_increments(p, 64), p.increments)
    one = coarse_increments(p, 1)
    assert one.shape == (1,)
    assert one[0] == p.terminal_value()
    assert one[0] == pytest.approx(p.increments.sum(), abs=1e-14)


def test_coarsen_halving_pairs():
    p = generate_path(3, 64)
    half = coarse_increments(p, 32)
    np.testing.assert_array_equal(half, p.increments[0::2] + p.increments[1::2])


@pytest.mark.parametrize("M", [0, 3, 48, 128])
def test_coarsen_rejects_non_divisor(M):
    with pytest.raises(ValueError):
        coarse_increments(generate_path(1, 64), M)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 11), st.integers(0, 11))
def test_dyadic_chain_consistency(seed, e0, drop):
    M0 = 2**e0
    p = generate_path(seed, M0)
    M = M0 >> min(drop, e0)
    direct = coarse_increments(p, M)
    stepwise = p.increments
    m = M0
    while m > M:
        m //= 2
        stepwise = coarse_increments(stepwise, m)
    assert np.array_equal(direct, stepwise)
    # every level shares W(T) bitwise
    assert coarse_increments(direct, 1)[0] == p.terminal_value()


def test_coarsen_non_dyadic_left_to_right():
    inc = np.arange(12, dtype=float) * 0.1
    got = coarse_increments(inc, 4)
    expect = [(inc[3 * i] + inc[3 * i + 1]) + inc[3 * i + 2] for i in range(4)]
    assert np.array_equal(got, expect)


def test_coarsen_batched_columns():
    inc = generate_paths(8, range(3), 32)
    c = coarse_increments(inc, 8)
    for j in range(3):
        assert np.array_equal(c[:, j], coarse_increments(inc[:, j], 8))


def test_wiener_path_fields():
    p = generate_path(1, 16, T=2.0)
    assert isinstance(p, WienerPath)
    assert p.k == 0.125
    with pytest.raises(ValueError):
        p.increments[0] = 1.0


@settings(max_examples=40, deadline=None)
@given(
    st.floats(-3, 3, allow_nan=False),
    st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=8),
    st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=8),
)
def test_linear_noise_lipschitz(alpha, a, b):
    n = min(len(a), len(b))
    u, v = np.array(a[:n]), np.array(b[:n])
    model = LinearNoise(alpha)
    lhs = np.linalg.norm(model.G(u) - model.G(v))
    assert lhs <= model.lipschitz_constant * np.linalg.norm(u - v) * (1 + 1e-12) + 1e-12
    np.testing.assert_allclose(model.DGG(u), alpha**2 * u)


def test_linear_noise_pickles():
    import pickle

    m = pickle.loads(pickle.dumps(LinearNoise(0.25)))
    assert m.alpha == 0.25
