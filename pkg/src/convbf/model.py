"""Per-bin value types shared by the solvers, plus stacking and the objective."""
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidInput
from .stft import MultichannelSpectrogram

__all__ = [
    "SteeringVector", "StackingLayout", "StackedObservation",
    "ConvolutionalWeights", "PowerEstimate", "stack", "stack_bin",
    "apply_beamformer", "objective", "sigma_floor",
]

REFERENCE_CHANNEL = 0


@dataclass(frozen=True)
class SteeringVector:
    v: np.ndarray
    reference_channel: int = REFERENCE_CHANNEL

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.complex128).reshape(-1)
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise InvalidInput("steering vector must be non-empty and finite")
        if not np.any(v):
            raise InvalidInput("steering vector must be non-zero")
        object.__setattr__(self, "v", v)

    @property
    def num_channels(self):
        return self.v.size

    @property
    def reference(self):
        return self.v[self.reference_channel]

    def relative(self):
        """``v / v[ref]``: the only form the distortionless solve depends on."""
        ref = self.reference
        if ref == 0:
            raise InvalidInput("steering vector has a zero reference entry")
        return self.v / ref


@dataclass(frozen=True)
class StackingLayout:
    """Stack layout ``[x_t; x_{t-b}; x_{t-b-1}; ...; x_{t-L_w}]``.

    ``filter_len == delay - 1`` is accepted and means no delayed taps,
    which is how the spatial-only (MPDR) reduction is expressed.
    """

    num_channels: int
    delay: int
    filter_len: int

    def __post_init__(self):
        if self.num_channels < 1:
            raise InvalidInput("num_channels must be >= 1")
        if self.delay < 1:
            raise InvalidInput("delay b must be >= 1")
        if self.filter_len < self.delay - 1:
            raise InvalidInput(
                f"filter_len L_w={self.filter_len} must be >= delay b={self.delay}")

    @classmethod
    def spatial(cls, num_channels, delay=1):
        return cls(num_channels, delay, delay - 1)

    @property
    def num_taps(self):
        return self.filter_len - self.delay + 1

    @property
    def stacked_dim(self):
        return self.num_channels * (self.num_taps + 1)

    @property
    def lags(self):
        return np.array([0] + list(range(self.delay, self.filter_len + 1)), dtype=np.intp)


@dataclass(frozen=True)
class StackedObservation:
    xbar: np.ndarray
    layout: StackingLayout

    def __post_init__(self):
        if self.xbar.shape != (self.layout.stacked_dim,):
            raise InvalidInput(
                f"stacked vector has shape {self.xbar.shape}, "
                f"layout needs ({self.layout.stacked_dim},)")


@dataclass(frozen=True)
class ConvolutionalWeights:
    wbar: np.ndarray
    layout: StackingLayout

    def __post_init__(self):
        if self.wbar.shape != (self.layout.stacked_dim,):
            raise InvalidInput(
                f"weights have shape {self.wbar.shape}, "
                f"layout needs ({self.layout.stacked_dim},)")
        if not np.all(np.isfinite(self.wbar)):
            raise InvalidInput("weights must be finite")

    @property
    def w0(self):
        return self.wbar[:self.layout.num_channels]

    def constraint_residual(self, v):
        """Relative violation ``|w0^H v - v_ref| / |v_ref|``."""
        ref = v.reference
        return abs(np.vdot(self.w0, v.v) - ref) / abs(ref)


@dataclass(frozen=True)
class PowerEstimate:
    sigma2: np.ndarray
    floor: float

    def __post_init__(self):
        if not self.floor > 0:
            raise InvalidInput("power floor must be positive")
        sigma2 = np.maximum(np.asarray(self.sigma2, dtype=np.float64), self.floor)
        object.__setattr__(self, "sigma2", sigma2)


def sigma_floor(x, rel=1e-10, minimum=1e-30):
    """Power floor for one bin: ``rel`` times the mean input power."""
    power = float(np.mean(np.abs(x) ** 2)) if np.size(x) else 0.0
    return max(rel * power, minimum)


def _bin_frames(spec, f):
    data = spec.data if isinstance(spec, MultichannelSpectrogram) else np.asarray(spec)
    if data.ndim == 3:
        return data[:, f, :]
    return data


def stack(spec, f, t, layout):
    """Stacked observation of bin ``f`` at frame ``t``; frames before 0 are zero."""
    x = _bin_frames(spec, f)
    if x.shape[1] != layout.num_channels:
        raise InvalidInput("channel count does not match layout")
    if not 0 <= t < x.shape[0]:
        raise InvalidInput(f"frame {t} outside [0, {x.shape[0]})")
    M = layout.num_channels
    out = np.zeros(layout.stacked_dim, dtype=np.complex128)
    for i, lag in enumerate(layout.lags):
        if t - lag >= 0:
            out[i * M:(i + 1) * M] = x[t - lag]
    return StackedObservation(out, layout)


def stack_bin(x, layout):
    """All stacked observations of one bin as a ``(T, D)`` array."""
    return kernels.stack_frames(np.asarray(x, dtype=np.complex128), layout.lags)


def apply_beamformer(wbar, xbar):
    w = wbar.wbar if isinstance(wbar, ConvolutionalWeights) else np.asarray(wbar)
    x = xbar.xbar if isinstance(xbar, StackedObservation) else np.asarray(xbar)
    if w.shape != x.shape:
        raise InvalidInput(f"dimension mismatch: {w.shape} vs {x.shape}")
    return complex(np.vdot(w, x))


def beamform_bin(x, wbar):
    """``w^H xbar_t`` for every frame of one bin."""
    w = wbar.wbar[:, None]
    return kernels.apply_filter(np.asarray(x, dtype=np.complex128), w, wbar.layout.lags)[:, 0]


def objective(wbar, spec, sigma2, v=None, layout=None, f=0, tol=1e-6):
    """Log-likelihood ``-sum |w^H xbar_t|^2 / s_t - sum log s_t`` for one bin.

    When ``v`` is given the distortionless constraint is checked, not
    enforced: a violation beyond ``tol`` only emits a warning.
    """
    layout = layout or wbar.layout
    x = _bin_frames(spec, f)
    s = sigma2.sigma2 if isinstance(sigma2, PowerEstimate) else np.asarray(sigma2, float)
    if s.shape != (x.shape[0],):
        raise InvalidInput("sigma2 length must equal the frame count")
    if not isinstance(wbar, ConvolutionalWeights):
        wbar = ConvolutionalWeights(np.asarray(wbar, dtype=np.complex128), layout)
    if wbar.layout.stacked_dim != layout.stacked_dim:
        raise InvalidInput("weights and layout disagree")
    d = beamform_bin(x, wbar)
    value = float(-np.sum(np.abs(d) ** 2 / s) - np.sum(np.log(s)))
    if v is not None and wbar.constraint_residual(v) > tol:
        warnings.warn("weights violate the distortionless constraint", RuntimeWarning)
    return value
