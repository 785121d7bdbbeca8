"""Seeded synthetic reverberant, noisy multichannel scenarios with ground truth."""
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .audio import write_wav
from .errors import InvalidInput
from .metrics import evaluate

__all__ = ["Scenario", "make_scenario", "oracle_metrics", "save_scenario",
           "estimate_rt60", "speech_like_source"]

SPEED_OF_SOUND = 343.0
ARRAY_RADIUS = 0.1
DRR_DB = 0.0
DIRECT_OFFSET = 16  # leading taps reserved for the fractional-delay kernel


@dataclass
class Scenario:
    clean: np.ndarray        # (n,)
    rir: np.ndarray          # (taps, M)
    noise: np.ndarray        # (n, M)
    mix: np.ndarray          # (n, M)
    desired: np.ndarray      # (n, M), direct path + early reflections
    split_index: int         # first late-reverberation tap
    snr_db: float
    rt60_s: float
    seed: int
    sample_rate: int = 16000
    lead_noise_s: float = 0.225
    trail_noise_s: float = 0.075

    @property
    def num_channels(self):
        return self.mix.shape[1]

    @property
    def late(self):
        return self.mix - self.noise - self.desired

    def sidecar(self):
        return {
            "schema_version": 1,
            "seed": self.seed,
            "rt60_s": self.rt60_s,
            "snr_db": None if np.isinf(self.snr_db) else self.snr_db,
            "lead_noise_s": self.lead_noise_s,
            "trail_noise_s": self.trail_noise_s,
            "num_channels": self.num_channels,
            "sample_rate": self.sample_rate,
            "num_samples": int(self.mix.shape[0]),
            "split_index": int(self.split_index),
        }


def _resonator(freq, bandwidth, fs):
    r = np.exp(-np.pi * bandwidth / fs)
    theta = 2 * np.pi * freq / fs
    return [1.0 - r], [1.0, -2 * r * np.cos(theta), r * r]


def speech_like_source(rng, num_samples, fs, start, stop):
    """Formant-filtered noise/pulse bursts with syllable-rate envelopes.

    Silence outside ``[start, stop)``.
    """
    out = np.zeros(num_samples)
    t = start + int(rng.uniform(0.0, 0.05) * fs)
    while True:
        length = int(rng.uniform(0.08, 0.35) * fs)
        if t + length > stop:
            break
        f0 = rng.uniform(90.0, 220.0)
        pulses = np.zeros(length)
        pulses[(np.arange(0, length, fs / f0)).astype(int)] = np.sqrt(fs / f0)
        voicing = rng.uniform(0.0, 1.0)
        excitation = voicing * pulses + (1 - voicing) * rng.standard_normal(length)
        burst = np.zeros(length)
        for lo, hi in ((300, 900), (900, 2500), (2000, 3800)):
            b, a = _resonator(rng.uniform(lo, hi), rng.uniform(80, 250), fs)
            burst += signal.lfilter(b, a, excitation) * rng.uniform(0.3, 1.0)
        envelope = np.sin(np.pi * np.arange(length) / length) ** rng.uniform(0.5, 2.0)
        burst *= envelope * 10 ** (rng.uniform(-10, 0) / 20)
        out[t:t + length] += burst / (np.std(burst) + 1e-12)
        t += length + int(rng.uniform(0.03, 0.25) * fs)
    b, a = signal.butter(6, 7000 / (fs / 2))
    out = signal.lfilter(b, a, out)
    out[:start] = 0.0
    out[stop:] = 0.0
    peak = np.max(np.abs(out))
    return out / peak * 0.5 if peak > 0 else out


def _fractional_delay(delay, taps=2 * DIRECT_OFFSET + 1):
    n = np.arange(taps) - DIRECT_OFFSET - (delay - np.floor(delay))
    return np.sinc(n) * np.hamming(taps), int(np.floor(delay))


def _make_rir(rng, num_mics, rt60, fs):
    azimuth = rng.uniform(0, 2 * np.pi)
    distance = rng.uniform(1.0, 2.0)
    source = distance * np.array([np.cos(azimuth), np.sin(azimuth)])
    angles = 2 * np.pi * np.arange(num_mics) / num_mics
    mics = ARRAY_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    dist = np.linalg.norm(source[None, :] - mics, axis=1)
    delays = (dist - dist.min()) / SPEED_OF_SOUND * fs
    gains = dist.min() / dist
    tail_len = int(round(1.2 * rt60 * fs)) if rt60 > 0 else 0
    taps = 2 * DIRECT_OFFSET + 1 + int(np.ceil(delays.max())) + tail_len
    rir = np.zeros((taps, num_mics))
    for m in range(num_mics):
        kernel, shift = _fractional_delay(delays[m])
        rir[shift:shift + kernel.size, m] += gains[m] * kernel
        if tail_len:
            start = DIRECT_OFFSET + shift + 1
            n = np.arange(taps - start)
            density = np.minimum(1.0, (n / (0.05 * fs)) ** 2 + 0.02)
            sparse = rng.random(n.size) < density
            tail = rng.standard_normal(n.size) * sparse * 10 ** (-3.0 * n / (rt60 * fs))
            direct_energy = gains[m] ** 2 * np.sum(kernel ** 2)
            tail *= np.sqrt(direct_energy / np.sum(tail ** 2) * 10 ** (-DRR_DB / 10))
            rir[start:, m] += tail
    return rir


def _pink(rng, num_samples, num_channels):
    white = rng.standard_normal((num_samples, num_channels))
    spectrum = np.fft.rfft(white, axis=0)
    freqs = np.arange(spectrum.shape[0], dtype=float)
    freqs[0] = 1.0
    spectrum /= np.sqrt(freqs)[:, None]
    pink = np.fft.irfft(spectrum, n=num_samples, axis=0)
    return pink / np.std(pink)


def make_scenario(seed=0, num_mics=8, rt60_s=0.5, snr_db=20.0, duration_s=6.0,
                  lead_noise_s=0.225, trail_noise_s=0.075, sample_rate=16000,
                  delay_frames=4, shift_samples=128, clean=None):
    """Build a scenario; identical arguments give identical arrays.

    The desired signal keeps the first ``delay_frames * shift_samples``
    samples of each impulse response after the direct path.
    """
    if rt60_s < 0:
        raise InvalidInput("rt60 must be non-negative")
    if num_mics < 1:
        raise InvalidInput("need at least one microphone")
    if lead_noise_s < 0 or trail_noise_s < 0:
        raise InvalidInput("noise margins must be non-negative")
    n = int(round(duration_s * sample_rate))
    lead = int(round(lead_noise_s * sample_rate))
    trail = int(round(trail_noise_s * sample_rate))
    if n - lead - trail < int(0.5 * sample_rate):
        raise InvalidInput("duration too short for the noise margins")
    rng_clean, rng_rir, rng_noise = [
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]
    if clean is None:
        clean = speech_like_source(rng_clean, n, sample_rate, lead, n - trail)
    else:
        clean = np.zeros(n) + np.pad(np.asarray(clean, float), (0, max(0, n - len(clean))))[:n]
        clean[:lead] = 0.0
        clean[n - trail:] = 0.0
    rir = _make_rir(rng_rir, num_mics, rt60_s, sample_rate)
    split = min(rir.shape[0], DIRECT_OFFSET + 1 + delay_frames * shift_samples)
    image = signal.fftconvolve(clean[:, None], rir, axes=0)[:n]
    desired = signal.fftconvolve(clean[:, None], rir[:split], axes=0)[:n]
    if np.isinf(snr_db) and snr_db > 0:
        noise = np.zeros((n, num_mics))
    else:
        noise = _pink(rng_noise, n, num_mics)
        region = slice(lead, n - trail)
        speech_energy = np.sum(image[region] ** 2)
        noise_energy = np.sum(noise[region] ** 2)
        noise *= np.sqrt(speech_energy / noise_energy * 10 ** (-snr_db / 10))
    return Scenario(clean, rir, noise, image + noise, desired, split, float(snr_db),
                    float(rt60_s), int(seed), sample_rate, lead_noise_s, trail_noise_s)


def estimate_rt60(h, fs, lo_db=-5.0, hi_db=-25.0):
    """Reverberation time from a line fit to the Schroeder decay curve."""
    edc = np.cumsum(h[::-1] ** 2)[::-1]
    edc_db = 10 * np.log10(edc / edc[0] + 1e-300)
    idx = np.where((edc_db <= lo_db) & (edc_db >= hi_db))[0]
    if idx.size < 2:
        raise InvalidInput("decay curve too short to fit")
    slope, _ = np.polyfit(idx / fs, edc_db[idx], 1)
    return -60.0 / slope


def oracle_metrics(scn, processed):
    """Metrics of ``processed`` against the reference-channel desired signal."""
    return evaluate(scn.desired[:, 0], processed, scn.sample_rate)


def save_scenario(scn, directory):
    """Write ``mix.wav``, ``desired.wav``, ``clean.wav`` and ``scenario.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_wav(directory / "mix.wav", scn.mix, scn.sample_rate)
    write_wav(directory / "desired.wav", scn.desired[:, 0], scn.sample_rate)
    write_wav(directory / "clean.wav", scn.clean, scn.sample_rate)
    with open(directory / "scenario.json", "w") as fh:
        json.dump(scn.sidecar(), fh, indent=2, sort_keys=True)
    return directory
