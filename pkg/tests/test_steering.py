import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convbf.errors import DegenerateSteering, InvalidInput, NumericalFailure
from convbf.steering import (NoiseMask, estimate_steering, estimate_steering_bin,
                             noise_mask_from_margins, normalize_steering)
from convbf.stft import MultichannelSpectrogram, StftConfig

from conftest import crandn


def containment_oracle(num_frames, num_samples, lead, trail, N=512, S=128):
    pad = N - S
    mask = np.zeros(num_frames, bool)
    for k in range(num_frames):
        inside_lead = inside_trail = True
        for n in range(N):
            i = k * S - pad + n
            if i < 0:
                i = -i
            if i >= num_samples:
                i = 2 * (num_samples - 1) - i
            inside_lead &= i < lead
            inside_trail &= i >= num_samples - trail
        mask[k] = inside_lead or (trail > 0 and inside_trail)
    return mask


def test_225_75_ms_margins_frame_counts():
    cfg = StftConfig()
    n = 6 * 16000
    T = (n + 2 * cfg.pad - cfg.frame_len_samples) // cfg.shift_samples + 1
    mask = noise_mask_from_margins(T, cfg, 0.225, 0.075, num_samples=n)
    expected = containment_oracle(T, n, 3600, 1200)
    np.testing.assert_array_equal(mask.noise_frames, expected)
    lead_frames = int(np.argmin(mask.noise_frames))
    assert lead_frames == 28
    assert mask.num_noise - lead_frames == int(expected[T // 2:].sum())


def test_margins_without_noise_rejected():
    with pytest.raises(InvalidInput):
        noise_mask_from_margins(100, StftConfig(), 0.0, 0.0)
    with pytest.raises(InvalidInput):
        noise_mask_from_margins(100, StftConfig(), -0.1, 0.1)


def test_all_noise_rejected():
    with pytest.raises(InvalidInput):
        noise_mask_from_margins(20, StftConfig(), 10.0, 0.0)


def test_too_few_noise_frames_for_channels():
    cfg = StftConfig()
    n = 16000
    T = (n + 2 * cfg.pad - cfg.frame_len_samples) // cfg.shift_samples + 1
    mask = noise_mask_from_margins(T, cfg, 0.05, 0.0, num_samples=n)
    with pytest.raises(InvalidInput):
        noise_mask_from_margins(T, cfg, 0.05, 0.0, num_samples=n,
                                num_channels=mask.num_noise + 1)


def test_rank_one_plane_wave_recovered(rng):
    a = crandn(rng, 4)
    T = 200
    d = 10 * crandn(rng, T)[:, None] * a[None, :]
    noise = np.zeros(T, bool)
    noise[:20] = True
    d[noise] = 0.0
    v = estimate_steering_bin(d, noise, noise_cov=np.eye(4)).v
    cos = abs(np.vdot(v, a)) / (np.linalg.norm(v) * np.linalg.norm(a))
    assert cos > 0.999


def test_no_speech_energy_is_degenerate(rng):
    n = crandn(rng, 50, 3)
    d = np.concatenate([n, n])
    mask = np.r_[np.ones(50, bool), np.zeros(50, bool)]
    with pytest.raises(DegenerateSteering):
        estimate_steering_bin(d, mask)


def test_single_channel_is_unit(rng):
    v = estimate_steering_bin(crandn(rng, 10, 1), np.r_[True, np.zeros(9, bool)])
    np.testing.assert_array_equal(v.v, [1.0])


def test_identity_noise_gives_principal_eigenvector(rng):
    T, M = 300, 3
    mix = crandn(rng, M, M)
    d = crandn(rng, T, M) @ mix.T
    mask = np.zeros(T, bool)
    mask[:30] = True
    v = estimate_steering_bin(d, mask, noise_cov=np.eye(M)).v
    speech = d[~mask]
    phi_x = speech.T @ speech.conj() / speech.shape[0]
    u = np.linalg.eigh(phi_x)[1][:, -1]
    u = u * np.conj(u[0]) / abs(u[0])
    u *= np.sqrt(M) / np.linalg.norm(u)
    np.testing.assert_allclose(v, u, atol=1e-8)


def test_indefinite_noise_covariance_fails(rng):
    d = crandn(rng, 20, 2)
    mask = np.r_[np.ones(5, bool), np.zeros(15, bool)]
    with pytest.raises(NumericalFailure):
        estimate_steering_bin(d, mask, noise_cov=np.diag([1.0, -5.0]))


def test_mask_length_checked(rng):
    with pytest.raises(InvalidInput):
        estimate_steering_bin(crandn(rng, 20, 2), np.ones(5, bool))


def test_vanishing_reference_rejected():
    with pytest.raises(DegenerateSteering):
        normalize_steering([0.0, 1.0, 1.0])


def test_spectrogram_wrapper(rng):
    cfg = StftConfig()
    data = crandn(rng, 40, cfg.num_bins, 2)
    spec = MultichannelSpectrogram(data, cfg, 40 * 128)
    mask = NoiseMask(np.r_[np.ones(10, bool), np.zeros(30, bool)])
    direct = estimate_steering_bin(data[:, 7, :], mask.noise_frames)
    np.testing.assert_array_equal(estimate_steering(spec, mask, 7).v, direct.v)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 31), M=st.integers(2, 6),
       alpha=st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3))
def test_scale_invariance_and_normalization(seed, M, alpha):
    rng = np.random.default_rng(seed)
    T = 120
    a = crandn(rng, M)
    d = crandn(rng, T)[:, None] * a[None, :] + 0.1 * crandn(rng, T, M)
    mask = np.zeros(T, bool)
    mask[:25] = True
    d[mask] = 0.1 * crandn(rng, 25, M)
    v1 = estimate_steering_bin(d, mask).v
    v2 = estimate_steering_bin(alpha * d, mask).v
    np.testing.assert_allclose(v2, v1, atol=1e-7)
    assert np.linalg.norm(v1) == pytest.approx(np.sqrt(M))
    assert v1[0].imag == 0 and v1[0].real > 0
