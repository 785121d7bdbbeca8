import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convbf.covariance import accumulate_bin, factorize
from convbf.errors import InvalidInput
from convbf.model import StackingLayout
from convbf.stft import MultichannelSpectrogram, StftConfig
from convbf.wpe import (PredictionFilter, dereverberate, dereverberate_bin,
                        prediction_cost, wpe_bin, wpe_filter)

from conftest import crandn


def ar_reverb(rng, T, b, tap=0.9):
    s = crandn(rng, T)
    x = s.copy()
    for t in range(b, T):
        x[t] += tap * x[t - b]
    return s, x


def filter_for(x, sigma2, layout, loading_rel=0.0):
    cov = factorize(accumulate_bin(x, sigma2, layout), loading_rel, full=False)
    return wpe_filter(cov, layout)


def test_ar_tap_recovered_and_gain():
    rng = np.random.default_rng(7)
    b, T = 3, 5000
    s, x = ar_reverb(rng, T, b)
    layout = StackingLayout(1, b, b)
    filt = filter_for(x[:, None], np.ones(T), layout)
    assert abs(filt.G[0, 0] - 0.9) < 5e-2
    d = dereverberate_bin(x[:, None], filt)[:, 0]
    before = np.sum(np.abs(x - s) ** 2)
    after = np.sum(np.abs(d - s) ** 2)
    assert 10 * np.log10(before / after) >= 10.0


def test_anechoic_filter_vanishes():
    rng = np.random.default_rng(3)
    T, layout = 2000, StackingLayout(2, 4, 12)
    a = np.array([1.0, 0.6 - 0.3j])
    x = crandn(rng, T)[:, None] * a[None, :]
    filt = filter_for(x, np.ones(T), layout, loading_rel=1e-6)
    assert np.linalg.norm(filt.G) < 0.1


def test_constant_weights_match_least_squares(rng):
    T, layout = 300, StackingLayout(2, 2, 4)
    x = crandn(rng, T, 2)
    filt = filter_for(x, np.full(T, 2.5), layout)
    delayed = np.zeros((T, layout.stacked_dim - 2), complex)
    for i, lag in enumerate(layout.lags[1:]):
        delayed[lag:, 2 * i:2 * i + 2] = x[:T - lag]
    # x_t ~ G^H xd_t  <=>  conj(x) ~ conj(xd) @ G
    G_ls, *_ = np.linalg.lstsq(delayed.conj(), x.conj(), rcond=None)
    np.testing.assert_allclose(filt.G, G_ls, atol=1e-10)


def test_uses_blocks_of_shared_covariance(rng):
    layout = StackingLayout(2, 2, 4)
    x = crandn(rng, 80, 2)
    cov = factorize(accumulate_bin(x, np.ones(80), layout), 0.0)
    filt = wpe_filter(cov, layout)
    assert np.array_equal(cov.cross, cov.R[2:, :2])
    np.testing.assert_allclose(filt.G, np.linalg.solve(cov.R[2:, 2:], cov.R[2:, :2]),
                               atol=1e-10)


def test_filter_requires_factorization(rng):
    layout = StackingLayout(1, 1, 1)
    with pytest.raises(InvalidInput):
        wpe_filter(accumulate_bin(crandn(rng, 10, 1), np.ones(10), layout), layout)


def test_zero_filter_is_identity(rng):
    cfg = StftConfig()
    data = crandn(rng, 20, cfg.num_bins, 2)
    spec = MultichannelSpectrogram(data, cfg, 20 * 128)
    layout = StackingLayout(2, 4, 6)
    out = dereverberate(spec, [PredictionFilter.zeros(layout)] * cfg.num_bins)
    np.testing.assert_array_equal(out.data, data)
    none = dereverberate(spec, [None] * cfg.num_bins)
    np.testing.assert_array_equal(none.data, data)


def test_dereverberate_shape_mismatch(rng):
    cfg = StftConfig()
    spec = MultichannelSpectrogram(crandn(rng, 5, cfg.num_bins, 2), cfg, 640)
    with pytest.raises(InvalidInput):
        dereverberate(spec, [None] * 3)
    with pytest.raises(InvalidInput):
        dereverberate(spec, [PredictionFilter.zeros(StackingLayout(3, 1, 1))] * cfg.num_bins)
    with pytest.raises(InvalidInput):
        PredictionFilter(np.zeros((2, 2)), StackingLayout(2, 1, 2))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), alpha=st.complex_numbers(min_magnitude=0.1, max_magnitude=10))
def test_dereverberate_is_linear(seed, alpha):
    rng = np.random.default_rng(seed)
    layout = StackingLayout(2, 1, 3)
    G = crandn(rng, layout.stacked_dim - 2, 2)
    filt = PredictionFilter(G, layout)
    x = crandn(rng, 30, 2)
    np.testing.assert_allclose(dereverberate_bin(alpha * x, filt),
                               alpha * dereverberate_bin(x, filt), rtol=1e-12, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31), M=st.integers(1, 3), b=st.integers(1, 3))
def test_inner_iteration_cost_non_increasing(seed, M, b):
    rng = np.random.default_rng(seed)
    T = 200
    x = crandn(rng, T, M) * rng.uniform(0.1, 3.0, (T, 1))
    for t in range(b, T):
        x[t] += 0.5 * x[t - b]
    history = []
    wpe_bin(x, StackingLayout(M, b, b + 2), iterations=5, loading_rel=0.0, history=history)
    assert len(history) == 5
    for prev, cur in zip(history, history[1:]):
        assert cur <= prev + 1e-9 * abs(prev)


def test_prediction_cost_known_value():
    d = np.array([[1.0, 1.0], [2.0, 0.0]])
    sigma2 = np.array([1.0, 2.0])
    assert prediction_cost(d, sigma2) == pytest.approx(2.0 + 2.0 + 2 * np.log(2.0))
