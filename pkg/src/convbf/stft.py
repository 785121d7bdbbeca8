"""Multichannel STFT analysis and weighted overlap-add synthesis."""
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .errors import InvalidInput

__all__ = ["StftConfig", "MultichannelSpectrogram", "analyze", "synthesize"]


@dataclass(frozen=True)
class StftConfig:
    sample_rate_hz: int = 16000
    frame_len_samples: int = 512
    shift_samples: int = 128
    window: str = "hann"
    fft_len_samples: int = 512

    def __post_init__(self):
        for name in ("sample_rate_hz", "frame_len_samples", "shift_samples",
                     "fft_len_samples"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise InvalidInput(f"{name} must be a positive integer, got {value!r}")
        if self.window != "hann":
            raise InvalidInput(f"unsupported window {self.window!r}")
        if self.shift_samples > self.frame_len_samples:
            raise InvalidInput("shift_samples must not exceed frame_len_samples")
        if self.fft_len_samples < self.frame_len_samples:
            raise InvalidInput("fft_len_samples must be >= frame_len_samples")
        n = self.fft_len_samples
        if n & (n - 1):
            raise InvalidInput("fft_len_samples must be a power of two")

    @classmethod
    def from_ms(cls, sample_rate_hz=16000, frame_ms=32.0, shift_ms=8.0):
        frame = int(round(sample_rate_hz * frame_ms / 1000))
        shift = int(round(sample_rate_hz * shift_ms / 1000))
        fft_len = 1 << (frame - 1).bit_length()
        return cls(sample_rate_hz, frame, shift, "hann", fft_len)

    @property
    def num_bins(self):
        return self.fft_len_samples // 2 + 1

    @property
    def pad(self):
        return self.frame_len_samples - self.shift_samples

    def analysis_window(self):
        return get_window(self.window, self.frame_len_samples, fftbins=True)

    def bin_frequencies(self):
        return np.arange(self.num_bins) * self.sample_rate_hz / self.fft_len_samples

    def to_dict(self):
        return {
            "sample_rate_hz": self.sample_rate_hz,
            "frame_len_samples": self.frame_len_samples,
            "shift_samples": self.shift_samples,
            "window": self.window,
            "fft_len_samples": self.fft_len_samples,
        }


@dataclass(frozen=True)
class MultichannelSpectrogram:
    """Complex STFT tensor indexed ``(frame, bin, channel)``."""

    data: np.ndarray
    config: StftConfig
    num_samples: int = 0

    def __post_init__(self):
        if self.data.ndim != 3:
            raise InvalidInput(f"expected (T, F, M) data, got shape {self.data.shape}")
        if self.data.shape[1] != self.config.num_bins:
            raise InvalidInput(
                f"bin count {self.data.shape[1]} does not match config "
                f"({self.config.num_bins})")
        if not np.all(np.isfinite(self.data)):
            raise InvalidInput("spectrogram contains non-finite values")

    @property
    def num_frames(self):
        return self.data.shape[0]

    @property
    def num_bins(self):
        return self.data.shape[1]

    @property
    def num_channels(self):
        return self.data.shape[2]

    def channel(self, m):
        return self.data[:, :, m]

    def with_data(self, data):
        return MultichannelSpectrogram(np.asarray(data), self.config, self.num_samples)


def _frames(padded, config):
    n, s = config.frame_len_samples, config.shift_samples
    count = (padded.shape[0] - n) // s + 1
    return np.lib.stride_tricks.sliding_window_view(padded, n, axis=0)[::s][:count]


def analyze(audio, config=StftConfig()):
    """STFT of ``audio`` shaped ``(samples, channels)`` or ``(samples,)``.

    Both ends are reflect-padded by ``frame_len - shift`` samples so that
    every input sample lies under full analysis windows.
    """
    audio = np.asarray(audio, dtype=np.float64)
    if audio.ndim == 1:
        audio = audio[:, None]
    if audio.ndim != 2 or audio.size == 0 or audio.shape[1] == 0:
        raise InvalidInput("audio must be a non-empty (samples, channels) array")
    if not np.all(np.isfinite(audio)):
        raise InvalidInput("audio contains non-finite samples")
    pad = config.pad
    if audio.shape[0] <= pad:
        # reflect padding needs more samples than the pad width
        raise InvalidInput(
            f"audio has {audio.shape[0]} samples; need more than {pad}")
    padded = np.pad(audio, ((pad, pad), (0, 0)), mode="reflect")
    if padded.shape[0] < config.frame_len_samples:
        raise InvalidInput("audio shorter than one frame after padding")
    # frames: (T, M, frame_len)
    frames = _frames(padded, config) * config.analysis_window()
    spec = np.fft.rfft(frames, n=config.fft_len_samples, axis=-1)
    return MultichannelSpectrogram(
        np.ascontiguousarray(spec.transpose(0, 2, 1)), config, audio.shape[0])


def synthesize(spec, config, length=None):
    """Weighted overlap-add inverse of :func:`analyze` for one channel.

    ``spec`` is a ``(T, F)`` complex array or a single-channel
    :class:`MultichannelSpectrogram`. ``length`` trims the result to the
    original signal length; by default the full unpadded span is returned.
    """
    if isinstance(spec, MultichannelSpectrogram):
        if spec.config != config:
            raise InvalidInput("spectrogram was produced with a different StftConfig")
        if spec.num_channels != 1:
            raise InvalidInput("synthesize expects a single channel")
        if length is None and spec.num_samples:
            length = spec.num_samples
        spec = spec.data[:, :, 0]
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != config.num_bins:
        raise InvalidInput(
            f"spectrogram shape {spec.shape} does not match config bins {config.num_bins}")
    n, s = config.frame_len_samples, config.shift_samples
    window = config.analysis_window()
    num_frames = spec.shape[0]
    frames = np.fft.irfft(spec, n=config.fft_len_samples, axis=-1)[:, :n] * window
    total = (num_frames - 1) * s + n
    out = np.zeros(total)
    norm = np.zeros(total)
    wsq = window ** 2
    for t in range(num_frames):
        out[t * s:t * s + n] += frames[t]
        norm[t * s:t * s + n] += wsq
    covered = norm > 1e-12
    out[covered] /= norm[covered]
    out[~covered] = 0.0
    out = out[config.pad:]
    if length is not None:
        if length > out.shape[0]:
            out = np.pad(out, (0, length - out.shape[0]))
        out = out[:length]
    else:
        out = out[:max(total - 2 * config.pad, 0)]
    return out
