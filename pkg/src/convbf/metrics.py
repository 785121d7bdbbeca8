"""Cepstrum distance and frequency-weighted segmental SNR.

Frames: 25 ms windows, 10 ms hop. Only frames where the reference is
active (energy within 40 dB of its loudest frame) are averaged.
"""
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from . import kernels
from .errors import InvalidInput

__all__ = ["MetricReport", "cepstrum_distance", "fwssnr", "evaluate", "mel_filterbank",
           "active_frames", "frame_signal"]

FRAME_MS = 25.0
HOP_MS = 10.0
ACTIVITY_DB = 40.0
CD_ORDER = 10
CD_CLAMP = (0.0, 10.0)
FW_BANDS = 23
FW_GAMMA = 0.2
FW_CLAMP = (-10.0, 35.0)


@dataclass(frozen=True)
class MetricReport:
    cd_db: float
    fwssnr_db: float
    frames_used: int

    def to_dict(self):
        return {"cd_db": self.cd_db, "fwssnr_db": self.fwssnr_db,
                "frames_used": self.frames_used}


def _mono(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise InvalidInput(f"metrics take single-channel signals, got shape {x.shape}")
    return x


def _align(ref, proc, frame_len):
    ref, proc = _mono(ref), _mono(proc)
    n = min(ref.size, proc.size)
    if n < frame_len:
        raise InvalidInput(f"signals shorter than one {frame_len}-sample frame")
    if not (np.all(np.isfinite(ref[:n])) and np.all(np.isfinite(proc[:n]))):
        raise InvalidInput("signals contain non-finite samples")
    return ref[:n], proc[:n]


def _frame_params(sample_rate):
    return int(round(FRAME_MS * sample_rate / 1000)), int(round(HOP_MS * sample_rate / 1000))


def frame_signal(x, frame_len, hop):
    count = (x.size - frame_len) // hop + 1
    return np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop][:count]


def active_frames(ref_frames):
    energy = np.sum(ref_frames ** 2, axis=1)
    peak = energy.max() if energy.size else 0.0
    if peak <= 0:
        return np.zeros(energy.shape, dtype=bool)
    return energy > peak * 10 ** (-ACTIVITY_DB / 10)


def _autocorr(frames, order):
    n = frames.shape[1]
    return np.stack([np.einsum("ij,ij->i", frames[:, :n - k], frames[:, k:])
                     for k in range(order + 1)], axis=1)


def lpc_cepstra(frames, order=CD_ORDER):
    """LPC cepstra ``c_1..c_order`` of Hamming-windowed frames."""
    windowed = frames * np.hamming(frames.shape[1])
    a, _ = kernels.levinson(_autocorr(windowed, order))
    return kernels.lpc_cepstrum(a, order)


def cepstrum_distance(ref, proc, sample_rate=16000, order=CD_ORDER, per_frame=False):
    """Mean LPC cepstrum distance in dB over reference-active frames.

    ``c_0`` is excluded, which makes the measure gain invariant.
    """
    frame_len, hop = _frame_params(sample_rate)
    ref, proc = _align(ref, proc, frame_len)
    rf, pf = frame_signal(ref, frame_len, hop), frame_signal(proc, frame_len, hop)
    active = active_frames(rf)
    if not active.any():
        raise InvalidInput("reference has no active frames")
    diff = lpc_cepstra(rf[active], order) - lpc_cepstra(pf[active], order)
    cd = 10.0 / np.log(10.0) * np.sqrt(2.0 * np.sum(diff ** 2, axis=1))
    cd = np.clip(cd, *CD_CLAMP)
    return cd if per_frame else float(np.mean(cd))


def _mel(hz):
    return 2595.0 * np.log10(1.0 + hz / 700.0)


def mel_filterbank(num_bands, nfft, sample_rate):
    """Triangular mel filters over ``[0, fs/2]`` as a ``(bands, nfft//2+1)`` matrix."""
    edges_mel = np.linspace(0.0, _mel(sample_rate / 2), num_bands + 2)
    edges = 700.0 * (10 ** (edges_mel / 2595.0) - 1.0)
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    bank = np.zeros((num_bands, freqs.size))
    for b in range(num_bands):
        lo, mid, hi = edges[b], edges[b + 1], edges[b + 2]
        rise = (freqs - lo) / (mid - lo)
        fall = (hi - freqs) / (hi - mid)
        bank[b] = np.clip(np.minimum(rise, fall), 0.0, None)
    return bank


def fwssnr(ref, proc, sample_rate=16000, num_bands=FW_BANDS, per_frame=False):
    """Frequency-weighted segmental SNR in dB.

    Per band: ``10 log10(E_ref / E_err)`` with ``err = ref - proc``,
    clamped to [-10, 35] and weighted by ``E_ref ** 0.2``.
    """
    frame_len, hop = _frame_params(sample_rate)
    ref, proc = _align(ref, proc, frame_len)
    rf, pf = frame_signal(ref, frame_len, hop), frame_signal(proc, frame_len, hop)
    active = active_frames(rf)
    if not active.any():
        raise InvalidInput("reference has no active frames")
    nfft = 1 << (frame_len - 1).bit_length()
    window = get_window("hann", frame_len)
    bank = mel_filterbank(num_bands, nfft, sample_rate)
    ref_pow = np.abs(np.fft.rfft(rf[active] * window, nfft)) ** 2
    err_pow = np.abs(np.fft.rfft((rf[active] - pf[active]) * window, nfft)) ** 2
    e_ref = ref_pow @ bank.T
    e_err = err_pow @ bank.T
    tiny = np.finfo(float).tiny
    snr = 10.0 * (np.log10(np.maximum(e_ref, tiny)) - np.log10(np.maximum(e_err, tiny)))
    snr = np.clip(snr, *FW_CLAMP)
    weight = e_ref ** FW_GAMMA
    total = weight.sum(axis=1)
    frame = np.where(total > 0, (weight * snr).sum(axis=1) / np.where(total > 0, total, 1.0),
                     FW_CLAMP[0])
    return frame if per_frame else float(np.mean(frame))


def evaluate(ref, proc, sample_rate=16000):
    frame_len, hop = _frame_params(sample_rate)
    r, _ = _align(ref, proc, frame_len)
    used = int(active_frames(frame_signal(r, frame_len, hop)).sum())
    return MetricReport(cepstrum_distance(ref, proc, sample_rate),
                        fwssnr(ref, proc, sample_rate), used)
