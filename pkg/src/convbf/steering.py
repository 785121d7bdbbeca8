"""Steering vector estimation by noise-whitened generalized eigendecomposition."""
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DegenerateSteering, InvalidInput, NumericalFailure
from .model import REFERENCE_CHANNEL, SteeringVector

__all__ = ["NoiseMask", "noise_mask_from_margins", "estimate_steering",
           "estimate_steering_bin", "normalize_steering"]


@dataclass(frozen=True)
class NoiseMask:
    noise_frames: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.noise_frames, dtype=bool).reshape(-1)
        object.__setattr__(self, "noise_frames", mask)

    @property
    def num_noise(self):
        return int(self.noise_frames.sum())

    @property
    def num_speech(self):
        return int((~self.noise_frames).sum())

    def check(self, min_frames=1):
        if self.num_noise < min_frames:
            raise InvalidInput(
                f"noise mask has {self.num_noise} noise frames; need {min_frames}")
        if self.num_speech < min_frames:
            raise InvalidInput(
                f"noise mask has {self.num_speech} speech frames; need {min_frames}")
        return self


def _reflect(idx, n):
    period = 2 * (n - 1) if n > 1 else 1
    idx = np.abs(idx) % period
    return np.where(idx >= n, period - idx, idx)


def noise_mask_from_margins(num_frames, config, lead_s, trail_s, num_samples=None,
                            num_channels=1):
    """Mark frames whose analysis window lies entirely inside a noise-only margin.

    Window samples that fall into the reflect padding are mapped back to
    the signal sample they mirror before the containment test.
    """
    if lead_s < 0 or trail_s < 0:
        raise InvalidInput("noise margins must be non-negative")
    N, S, pad = config.frame_len_samples, config.shift_samples, config.pad
    if num_samples is None:
        num_samples = (num_frames - 1) * S + N - 2 * pad
    lead = int(round(lead_s * config.sample_rate_hz))
    trail = int(round(trail_s * config.sample_rate_hz))
    starts = np.arange(num_frames) * S - pad
    idx = _reflect(starts[:, None] + np.arange(N)[None, :], num_samples)
    in_lead = np.all(idx < lead, axis=1)
    in_trail = np.all(idx >= num_samples - trail, axis=1) if trail > 0 else np.zeros(num_frames, bool)
    return NoiseMask(in_lead | in_trail).check(max(1, num_channels))


def normalize_steering(v):
    """Real-positive reference entry and ``||v||_2 = sqrt(M)``."""
    v = np.asarray(v, dtype=np.complex128)
    ref = v[REFERENCE_CHANNEL]
    norm = np.linalg.norm(v)
    if not norm > 0 or abs(ref) < 1e-8 * norm:
        raise DegenerateSteering("reference entry of the steering vector vanishes")
    v = v * (np.conj(ref) / abs(ref))
    return SteeringVector(v * (np.sqrt(v.size) / norm))


def estimate_steering_bin(d, noise_frames, noise_cov=None, eps=1e-6, rel_tol=1e-9):
    """Steering vector of one bin from ``(T, M)`` frames.

    ``noise_cov`` overrides the noise covariance measured on the
    noise-only frames.
    """
    d = np.asarray(d, dtype=np.complex128)
    T, M = d.shape
    noise_frames = np.asarray(noise_frames, dtype=bool)
    if noise_frames.shape != (T,):
        raise InvalidInput("noise mask length must equal the frame count")
    if M == 1:
        return SteeringVector(np.ones(1, dtype=np.complex128))
    speech = d[~noise_frames]
    if speech.shape[0] == 0:
        raise InvalidInput("no speech frames for steering estimation")
    if noise_cov is None:
        noise = d[noise_frames]
        if noise.shape[0] == 0:
            raise InvalidInput("no noise frames for steering estimation")
        phi_n = noise.T @ noise.conj() / noise.shape[0]
    else:
        phi_n = np.asarray(noise_cov, dtype=np.complex128)
    phi_n = 0.5 * (phi_n + phi_n.conj().T)
    phi_n = phi_n + eps * np.real(np.trace(phi_n)) / M * np.eye(M)
    phi_x = speech.T @ speech.conj() / speech.shape[0]
    try:
        L = linalg.cholesky(phi_n, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalFailure(f"noise covariance is not positive definite: {exc}") from exc
    # whitened target covariance L^{-1} (phi_x - phi_n) L^{-H}
    half = linalg.solve_triangular(L, phi_x - phi_n, lower=True)
    white = linalg.solve_triangular(L, half.conj().T, lower=True)
    white = 0.5 * (white + white.conj().T)
    values, vectors = linalg.eigh(white)
    scale = np.real(np.trace(linalg.solve_triangular(
        L, linalg.solve_triangular(L, phi_x, lower=True).conj().T, lower=True))) / M
    if not values[-1] > rel_tol * max(scale, np.finfo(float).tiny):
        raise DegenerateSteering(
            f"principal generalized eigenvalue {values[-1]:.3g} carries no target energy")
    return normalize_steering(L @ vectors[:, -1])


def estimate_steering(derev, mask, f, noise_cov=None):
    """Steering vector of bin ``f`` of a (dereverberated) spectrogram."""
    mask = mask if isinstance(mask, NoiseMask) else NoiseMask(mask)
    return estimate_steering_bin(derev.data[:, f, :], mask.noise_frames, noise_cov)
