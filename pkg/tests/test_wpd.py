import logging
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import convbf.wpd as wpd_module
from convbf import metrics
from convbf.covariance import CovarianceSet, factorize
from convbf.errors import InvalidInput, NumericalFailure
from convbf.model import StackingLayout, SteeringVector
from convbf.steering import NoiseMask, noise_mask_from_margins
from convbf.stft import MultichannelSpectrogram, StftConfig, analyze
from convbf.synth import make_scenario
from convbf.wpd import (Band, SteeringMode, WpdConfig, enhance, run,
                        run_cascade_wpe_mpdr, run_mpdr, run_wpe, solve_weights,
                        update_sigma)

from conftest import crandn, random_pd

SMALL = StftConfig(16000, 16, 4, "hann", 16)  # 9 bins


def small_spec(data):
    return MultichannelSpectrogram(data, SMALL, data.shape[0] * 4)


def small_config(filter_len=2, delay=1, **kw):
    return WpdConfig(bands=(Band(0.0, 8000.0, filter_len),), delay=delay, **kw)


def leading_mask(T, n):
    m = np.zeros(T, bool)
    m[:n] = True
    return NoiseMask(m)


# solve_weights

def test_identity_covariance_passes_reference():
    layout = StackingLayout(3, 2, 4)
    cov = factorize(CovarianceSet(np.eye(layout.stacked_dim, dtype=complex), 3), 0.0)
    w = solve_weights(cov, SteeringVector([1, 0, 0]), layout)
    expected = np.zeros(layout.stacked_dim)
    expected[0] = 1
    np.testing.assert_allclose(w.wbar, expected, atol=1e-15)


def projected_gradient_minimizer(R, c, iters=20000):
    """Minimize w^H R w subject to w^H c = 1 by projected gradient descent."""
    P = np.eye(len(c)) - np.outer(c, c.conj()) / np.vdot(c, c).real
    w = c / np.vdot(c, c).real
    step = 1.0 / np.linalg.eigvalsh(R)[-1]
    for _ in range(iters):
        w = w - step * (P @ (R @ w))
    return w


def test_weights_are_the_constrained_minimizer(rng):
    layout = StackingLayout(2, 1, 2)  # D = 6
    R = random_pd(rng, 6, cond_floor=0.5)
    v = SteeringVector(crandn(rng, 2))
    w = solve_weights(factorize(CovarianceSet(R, 2), 0.0), v, layout).wbar
    c = np.zeros(6, complex)
    c[:2] = v.relative()
    oracle = projected_gradient_minimizer(R, c)
    np.testing.assert_allclose(w, oracle, atol=1e-8)
    cost = np.vdot(w, R @ w).real
    for _ in range(200):
        delta = crandn(rng, 6)
        delta[:2] -= c[:2] * np.vdot(c[:2], delta[:2]) / np.vdot(c[:2], c[:2])
        assert abs(np.vdot(delta[:2], v.v)) < 1e-12
        assert np.vdot(w + delta, R @ (w + delta)).real >= cost - 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), scale=st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3))
def test_steering_scale_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    layout = StackingLayout(3, 1, 1)
    cov = factorize(CovarianceSet(random_pd(rng, 6), 3), 0.0, full=False)
    v = crandn(rng, 3)
    a = solve_weights(cov, SteeringVector(v), layout).wbar
    b = solve_weights(cov, SteeringVector(scale * v), layout).wbar
    np.testing.assert_allclose(b, a, rtol=1e-9, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 31), M=st.integers(1, 4), taps=st.integers(0, 3),
       full=st.booleans())
def test_distortionless_constraint(seed, M, taps, full):
    rng = np.random.default_rng(seed)
    layout = StackingLayout(M, 2, 1 + taps)
    cov = factorize(CovarianceSet(random_pd(rng, layout.stacked_dim), M), 1e-6, full=full)
    v = SteeringVector(crandn(rng, M))
    w = solve_weights(cov, v, layout)
    assert w.constraint_residual(v) < 1e-8


def test_solve_rejects_mismatched_inputs(rng):
    cov = factorize(CovarianceSet(random_pd(rng, 4), 2), 0.0)
    with pytest.raises(InvalidInput):
        solve_weights(cov, SteeringVector([1, 1]), StackingLayout(2, 1, 2))
    with pytest.raises(InvalidInput):
        solve_weights(cov, SteeringVector([1, 1, 1]), StackingLayout(2, 1, 1))


# update_sigma

def test_update_sigma_examples(rng):
    assert np.all(update_sigma(np.zeros(5), 1e-9).sigma2 == 1e-9)
    assert update_sigma(np.array([2.0, 2j]), 1e-9).sigma2.tolist() == [4.0, 4.0]
    d = crandn(rng, 50)
    s = update_sigma(d, 1e-3).sigma2
    np.testing.assert_allclose(s, np.maximum(d.real ** 2 + d.imag ** 2, 1e-3), rtol=1e-15)
    with pytest.raises(InvalidInput):
        update_sigma(np.array([np.nan]), 1.0)


# run

def test_anechoic_injected_steering_recovers_desired(rng):
    T, F, M = 20000, SMALL.fft_len_samples // 2 + 1, 3
    a = crandn(rng, F, M)
    s = crandn(rng, T, F)
    data = s[:, :, None] * a[None, :, :]
    result = run(small_spec(data), small_config(3, 1, iterations=1), steering=a)
    desired = data[:, :, 0]
    err = np.sum(np.abs(result.spectrogram - desired) ** 2)
    assert 10 * np.log10(np.sum(np.abs(desired) ** 2) / err) > 40


def test_wpd_without_wpe_is_input_steering_config(rng):
    data = crandn(rng, 60, 9, 2)
    spec, mask = small_spec(data), leading_mask(60, 10)
    config = small_config(iterations=1)
    a = enhance(spec, "wpd", config, mask)
    b = run(spec, replace(config, steering_mode=SteeringMode.FROM_INPUT), mask)
    np.testing.assert_array_equal(a.spectrogram, b.spectrogram)
    assert a.method == "wpd"


def test_zero_input_is_silent():
    spec = small_spec(np.zeros((40, 9, 2), complex))
    result = run(spec, small_config(), leading_mask(40, 8))
    assert np.all(result.spectrogram == 0)
    assert np.all(result.diagnostics.sigma2 == 1e-30)
    assert result.diagnostics.steering_fallback.all()
    assert np.all(result.waveform == 0)


@pytest.mark.parametrize("seed", range(50))
def test_objective_non_decreasing_fixed_steering(seed):
    rng = np.random.default_rng(seed)
    T = 60
    data = crandn(rng, T, 9, 2) * rng.uniform(0.2, 2.0, (T, 1, 1))
    data[1:] += 0.6 * data[:-1]
    steering = crandn(rng, 9, 2)
    result = run(small_spec(data), small_config(2, 1, iterations=4, loading_rel=0.0),
                 steering=steering)
    obj = result.diagnostics.objective
    assert np.all(np.diff(obj, axis=0) >= -1e-8)


def test_phase_equivariance(rng):
    data = crandn(rng, 80, 9, 2)
    data[2:] += 0.5 * data[:-2]
    spec, mask = small_spec(data), leading_mask(80, 15)
    rot = np.exp(1j * 0.7)
    config = small_config(3, 1)
    a = run(spec, config, mask)
    b = run(small_spec(rot * data), config, mask)
    np.testing.assert_allclose(b.spectrogram, rot * a.spectrogram, atol=1e-9)
    np.testing.assert_allclose(b.diagnostics.objective, a.diagnostics.objective, rtol=1e-9)
    np.testing.assert_allclose(b.diagnostics.sigma2, a.diagnostics.sigma2, rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(b.diagnostics.steering, a.diagnostics.steering, atol=1e-9)


def test_single_channel_rejected(rng):
    with pytest.raises(InvalidInput, match="2 channels"):
        run(small_spec(crandn(rng, 20, 9, 1)), small_config(), leading_mask(20, 5))
    with pytest.raises(InvalidInput, match="mpdr"):
        run_mpdr(small_spec(crandn(rng, 20, 9, 1)), small_config(), leading_mask(20, 5))


def test_mask_required_without_steering(rng):
    with pytest.raises(InvalidInput):
        run(small_spec(crandn(rng, 20, 9, 2)), small_config())


def test_bands_must_reach_nyquist(rng):
    config = WpdConfig(bands=(Band(0.0, 4000.0, 6),))
    with pytest.raises(InvalidInput):
        run(small_spec(crandn(rng, 20, 9, 2)), config, leading_mask(20, 5))


def test_errors_carry_bin_context(rng, monkeypatch):
    def failing(*args, **kwargs):
        raise NumericalFailure("not positive definite")

    monkeypatch.setattr(wpd_module, "factorize", failing)
    with pytest.raises(NumericalFailure, match="bin 0: not positive definite"):
        run(small_spec(crandn(rng, 30, 9, 2)), small_config(), steering=np.ones((9, 2)))


def test_negative_loading_rejected():
    with pytest.raises(InvalidInput):
        small_config(loading_rel=-1.0)


def test_underdetermined_bins_flagged(rng, caplog):
    with caplog.at_level(logging.WARNING):
        result = run(small_spec(crandn(rng, 5, 9, 2)), small_config(3, 1),
                     steering=np.ones((9, 2)))
    assert result.diagnostics.underdetermined.all()
    assert "fewer frames" in caplog.text
    assert np.all(np.isfinite(result.spectrogram))


def test_threaded_matches_serial(rng):
    data = crandn(rng, 50, 9, 2)
    spec, mask = small_spec(data), leading_mask(50, 10)
    a = run(spec, small_config(), mask, threads=1)
    b = run(spec, small_config(), mask, threads=4)
    np.testing.assert_array_equal(a.spectrogram, b.spectrogram)


def test_band_lookup_ties_go_low():
    config = WpdConfig()
    assert config.filter_len_for(800.0) == 12
    assert config.filter_len_for(800.1) == 10
    assert config.filter_len_for(1500.0) == 10
    assert config.filter_len_for(8000.0) == 6
    with pytest.raises(InvalidInput):
        WpdConfig(bands=((0, 100, 6), (200, 8000, 6)))
    with pytest.raises(InvalidInput):
        WpdConfig(delay=4, bands=((0, 8000, 3),))
    with pytest.raises(InvalidInput):
        WpdConfig(iterations=0)


# MPDR

def test_mpdr_reduction_is_exact(rng):
    data = crandn(rng, 70, 9, 3)
    spec = small_spec(data)
    steering = crandn(rng, 9, 3)
    reduced = run(spec, small_config(mpdr_mode=True), steering=steering)
    direct = run_mpdr(spec, small_config(), steering=steering)
    np.testing.assert_allclose(reduced.spectrogram, direct.spectrogram, rtol=1e-10, atol=1e-12)
    mask = leading_mask(70, 12)
    reduced = run(spec, small_config(mpdr_mode=True), mask)
    direct = run_mpdr(spec, small_config(), mask)
    np.testing.assert_allclose(reduced.spectrogram, direct.spectrogram, rtol=1e-10, atol=1e-12)


def test_mpdr_identity_covariance_passthrough(rng):
    T = 40
    data = np.stack([np.linalg.qr(crandn(rng, T, 2))[0] for _ in range(9)], axis=1)
    e1 = np.tile([1.0, 0.0], (9, 1))
    result = run_mpdr(small_spec(data), small_config(loading_rel=0.0), steering=e1)
    np.testing.assert_allclose(result.spectrogram, data[:, :, 0], atol=1e-12)


def test_mpdr_matches_closed_form_two_channel(rng):
    T = 400
    a = np.array([1.0, np.exp(-0.9j)])
    b = np.array([1.0, np.exp(1.7j)])
    s, i = crandn(rng, T, 9), 3.0 * crandn(rng, T, 9)
    data = s[..., None] * a + i[..., None] * b + 0.01 * crandn(rng, T, 9, 2)
    result = run_mpdr(small_spec(data), small_config(loading_rel=0.0),
                      steering=np.tile(a, (9, 1)))
    for f in range(9):
        x = data[:, f, :]
        R = x.T @ x.conj()
        adj = np.array([[R[1, 1], -R[0, 1]], [-R[1, 0], R[0, 0]]])
        w = adj @ a / np.vdot(a, adj @ a)
        np.testing.assert_allclose(result.spectrogram[:, f], x @ w.conj(), atol=1e-9)
        assert abs(np.vdot(w, b)) ** 2 < 0.01 * abs(b[0]) ** 2


# cascade and WPE

def test_cascade_equals_mpdr_when_prediction_is_void(rng):
    T, L = 120, 3
    data = np.zeros((T, 9, 2), complex)
    data[::L + 2] = crandn(rng, len(range(0, T, L + 2)), 9, 2)
    spec, mask = small_spec(data), leading_mask(T, 20)
    config = small_config(L, 1)
    cascade = run_cascade_wpe_mpdr(spec, config, mask)
    mpdr = run_mpdr(spec, config, mask)
    np.testing.assert_allclose(cascade.spectrogram, mpdr.spectrogram, atol=1e-6)
    np.testing.assert_array_equal(cascade.dereverberated.data, data)
    assert cascade.method == "wpe_mpdr"


@pytest.fixture(scope="module")
def reverberant_scene():
    scene = make_scenario(seed=5, num_mics=4, rt60_s=0.5, snr_db=60, duration_s=3.0)
    cfg = StftConfig()
    spec = analyze(scene.mix, cfg)
    mask = noise_mask_from_margins(spec.num_frames, cfg, scene.lead_noise_s, scene.trail_noise_s,
                                   num_samples=len(scene.mix), num_channels=4)
    return scene, spec, mask


def test_cascade_improves_reverberant_input(reverberant_scene):
    scene, spec, mask = reverberant_scene
    out = run_cascade_wpe_mpdr(spec, WpdConfig(), mask).waveform
    base = metrics.fwssnr(scene.desired[:, 0], scene.mix[:, 0])
    assert metrics.fwssnr(scene.desired[:, 0], out) > base


def test_run_wpe_keeps_all_channels(reverberant_scene):
    _, spec, _ = reverberant_scene
    result = run_wpe(spec, WpdConfig(iterations=2))
    assert result.dereverberated.data.shape == spec.data.shape
    assert result.diagnostics.objective.shape == (2, spec.num_bins)
    np.testing.assert_array_equal(result.spectrogram, result.dereverberated.data[:, :, 0])


def test_unknown_method(rng):
    with pytest.raises(InvalidInput, match="unknown method"):
        enhance(small_spec(crandn(rng, 10, 9, 2)), "beamformit")
