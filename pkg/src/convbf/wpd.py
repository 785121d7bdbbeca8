"""Maximum-likelihood WPD convolutional beamformer and its baselines.

Each frequency bin is solved independently by coordinate ascent on the
likelihood ``-sum_t |w^H xbar_t|^2 / s_t - sum_t log s_t``:

1. accumulate ``R`` with the current powers ``s_t`` and factorize its
   delayed block ``R_tilde``,
2. optionally run WPE from the shared ``R_tilde`` and re-estimate the
   steering vector on the dereverberated channels,
3. solve the distortionless weights ``R^{-1} vbar / (vbar^H R^{-1} vbar)``
   through the Schur complement of the leading block,
4. beamform and set ``s_t = |d_t|^2``.

MPDR is the special case with no delayed taps and ``s_t`` frozen at 1.
"""
import enum
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .covariance import accumulate_bin, factorize, leading_inverse_columns
from .errors import ConvBFError, InvalidInput, NumericalFailure
from .model import (ConvolutionalWeights, PowerEstimate, StackingLayout, SteeringVector,
                    beamform_bin, objective, sigma_floor)
from .steering import NoiseMask, estimate_steering_bin
from .stft import synthesize
from .wpe import dereverberate_bin, wpe_bin, wpe_filter

__all__ = [
    "Band", "SteeringMode", "WpdConfig", "IterationDiagnostics", "EnhancementResult",
    "DEFAULT_BANDS", "solve_weights", "update_sigma", "run", "run_mpdr",
    "run_wpe", "run_cascade_wpe_mpdr",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Band:
    low_hz: float
    high_hz: float
    filter_len: int


DEFAULT_BANDS = (Band(0.0, 800.0, 12), Band(800.0, 1500.0, 10), Band(1500.0, 8000.0, 6))


class SteeringMode(str, enum.Enum):
    FROM_INPUT = "from_input"
    FROM_WPE = "from_wpe"


@dataclass(frozen=True)
class WpdConfig:
    bands: tuple = DEFAULT_BANDS
    delay: int = 4
    iterations: int = 3
    loading_rel: float = 1e-6
    sigma_floor_rel: float = 1e-10
    steering_mode: SteeringMode = SteeringMode.FROM_WPE
    mpdr_mode: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(
            b if isinstance(b, Band) else Band(*b) for b in self.bands))
        object.__setattr__(self, "steering_mode", SteeringMode(self.steering_mode))
        if self.iterations < 1:
            raise InvalidInput("iterations must be >= 1")
        if self.delay < 1:
            raise InvalidInput("delay must be >= 1")
        if not self.loading_rel >= 0 or not self.sigma_floor_rel >= 0:
            raise InvalidInput("loading_rel and sigma_floor_rel must be non-negative")
        if not self.bands:
            raise InvalidInput("at least one band is required")
        if self.bands[0].low_hz != 0:
            raise InvalidInput("bands must start at 0 Hz")
        for lo, hi in zip(self.bands, self.bands[1:]):
            if lo.high_hz != hi.low_hz:
                raise InvalidInput(f"bands are not contiguous at {lo.high_hz} Hz")
        for b in self.bands:
            if b.high_hz <= b.low_hz:
                raise InvalidInput(f"empty band {b}")
            if not self.mpdr_mode and b.filter_len < self.delay:
                raise InvalidInput(
                    f"filter length {b.filter_len} shorter than delay {self.delay}")

    def check_nyquist(self, sample_rate_hz):
        if self.bands[-1].high_hz < sample_rate_hz / 2:
            raise InvalidInput(
                f"bands end at {self.bands[-1].high_hz} Hz, below Nyquist "
                f"{sample_rate_hz / 2} Hz")

    def filter_len_for(self, freq_hz):
        """Band lookup by bin centre frequency; boundaries belong to the lower band."""
        for band in self.bands:
            if freq_hz <= band.high_hz:
                return band.filter_len
        return self.bands[-1].filter_len

    def layout_for(self, freq_hz, num_channels):
        if self.mpdr_mode:
            return StackingLayout.spatial(num_channels, self.delay)
        return StackingLayout(num_channels, self.delay, self.filter_len_for(freq_hz))

    def to_dict(self):
        return {
            "bands": [[b.low_hz, b.high_hz, b.filter_len] for b in self.bands],
            "delay": self.delay,
            "iterations": self.iterations,
            "loading_rel": self.loading_rel,
            "sigma_floor_rel": self.sigma_floor_rel,
            "steering_mode": self.steering_mode.value,
            "mpdr_mode": self.mpdr_mode,
        }


@dataclass
class IterationDiagnostics:
    objective: np.ndarray            # (iterations, F)
    constraint_residual: np.ndarray  # (iterations, F)
    sigma2: np.ndarray               # (iterations, T, F)
    steering: np.ndarray             # (F, M), final estimate per bin
    steering_fallback: np.ndarray    # (F,) bool, v = e_1 used
    underdetermined: np.ndarray      # (F,) bool, T < D

    @property
    def iterations(self):
        return self.objective.shape[0]


@dataclass
class EnhancementResult:
    method: str
    spectrogram: np.ndarray          # (T, F) reference-channel output
    waveform: np.ndarray
    diagnostics: IterationDiagnostics
    iteration_outputs: np.ndarray = None  # (iterations, T, F)
    dereverberated: object = None    # MultichannelSpectrogram for WPE-based methods
    extras: dict = field(default_factory=dict)

    def iteration_waveform(self, i, config):
        return synthesize(self.iteration_outputs[i], config, len(self.waveform))


def solve_weights(cov, v, layout, G=None):
    """Distortionless weights ``R^{-1} vbar / (vbar^H R^{-1} vbar)``.

    ``vbar`` is ``v / v_ref`` followed by zeros over the delayed taps.
    Uses ``cov.R_inv`` when present, otherwise the Schur route from
    ``R_tilde^{-1}`` (with ``G = R_tilde^{-1} P`` reused if given).
    """
    if cov.dim != layout.stacked_dim:
        raise InvalidInput("covariance dimension does not match layout")
    v = v if isinstance(v, SteeringVector) else SteeringVector(v)
    M = layout.num_channels
    if v.num_channels != M:
        raise InvalidInput("steering vector length does not match layout")
    u = v.relative()
    cols = cov.R_inv[:, :M] if cov.R_inv is not None else leading_inverse_columns(cov, G)
    num = cols @ u
    den = np.vdot(u, num[:M])
    if not np.isfinite(den) or not den.real > 0:
        raise NumericalFailure(f"vbar^H R^-1 vbar = {den} is not positive")
    return ConvolutionalWeights(num / den.real, layout)


def update_sigma(dhat, floor):
    """``s_t = max(|d_t|^2, floor)``."""
    dhat = np.asarray(dhat)
    if not np.all(np.isfinite(dhat)):
        raise InvalidInput("desired-signal estimate is not finite")
    return PowerEstimate(np.abs(dhat) ** 2, floor)


@dataclass
class _BinResult:
    outputs: np.ndarray      # (iterations, T)
    objective: np.ndarray
    residual: np.ndarray
    sigma2: np.ndarray       # (iterations, T)
    steering: np.ndarray
    fallback: bool
    underdetermined: bool
    derev: np.ndarray = None


def _steer(frames, noise_frames, previous):
    try:
        return estimate_steering_bin(frames, noise_frames), False
    except (NumericalFailure, InvalidInput) as exc:
        logger.debug("steering fallback: %s", exc)
        if previous is not None:
            return previous, True
        e1 = np.zeros(frames.shape[1], dtype=np.complex128)
        e1[0] = 1.0
        return SteeringVector(e1), True


def _wpd_bin(x, layout, noise_frames, config, steering=None):
    T = x.shape[0]
    floor = sigma_floor(x, config.sigma_floor_rel)
    if config.mpdr_mode:
        sigma = PowerEstimate(np.ones(T), floor)
    else:
        sigma = PowerEstimate(np.mean(np.abs(x) ** 2, axis=1), floor)
    refresh = config.steering_mode is SteeringMode.FROM_WPE and layout.num_taps > 0
    v, fallback, derev = steering, False, None
    iters = config.iterations
    outputs = np.zeros((iters, T), dtype=np.complex128)
    obj, res, sig = np.zeros(iters), np.zeros(iters), np.zeros((iters, T))
    for it in range(iters):
        cov = factorize(accumulate_bin(x, sigma, layout), config.loading_rel, full=False)
        G = None
        if refresh:
            filt = wpe_filter(cov, layout)
            G = filt.G
            derev = dereverberate_bin(x, filt)
            if steering is None:
                v, fb = _steer(derev, noise_frames, v)
                fallback |= fb
        elif v is None:
            v, fallback = _steer(x, noise_frames, None)
        w = solve_weights(cov, v, layout, G)
        d = beamform_bin(x, w)
        if not config.mpdr_mode:
            sigma = update_sigma(d, floor)
        outputs[it] = d
        obj[it] = objective(w, x, sigma)
        res[it] = w.constraint_residual(v)
        sig[it] = sigma.sigma2
    return _BinResult(outputs, obj, res, sig, v.v, fallback, T < layout.stacked_dim, derev)


def _num_threads(threads):
    if threads is None:
        env = os.environ.get("CONVBF_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def _map_bins(fn, num_bins, threads):
    def guarded(f):
        try:
            return fn(f)
        except ConvBFError as exc:
            raise type(exc)(f"bin {f}: {exc}") from exc

    threads = _num_threads(threads)
    if threads == 1:
        return [guarded(f) for f in range(num_bins)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(guarded, range(num_bins)))


def _collect(method, spec, results, keep_derev=False):
    T, F, M = spec.data.shape
    outputs = np.stack([r.outputs for r in results], axis=-1)  # (iters, T, F)
    diag = IterationDiagnostics(
        objective=np.stack([r.objective for r in results], axis=-1),
        constraint_residual=np.stack([r.residual for r in results], axis=-1),
        sigma2=np.stack([r.sigma2 for r in results], axis=-1),
        steering=np.stack([r.steering for r in results]),
        steering_fallback=np.array([r.fallback for r in results]),
        underdetermined=np.array([r.underdetermined for r in results]),
    )
    if diag.underdetermined.any():
        logger.warning("%d bins have fewer frames than stacked dimensions; "
                       "relying on diagonal loading", int(diag.underdetermined.sum()))
    derev = None
    if keep_derev and all(r.derev is not None for r in results):
        derev = spec.with_data(np.stack([r.derev for r in results], axis=1))
    out = outputs[-1]
    wave = synthesize(out, spec.config, spec.num_samples or None)
    return EnhancementResult(method, out, wave, diag, outputs, derev)


def _mask_frames(mask, spec, needed):
    if mask is None:
        if needed:
            raise InvalidInput("a noise mask is required for steering estimation")
        return np.zeros(spec.num_frames, dtype=bool)
    mask = mask if isinstance(mask, NoiseMask) else NoiseMask(mask)
    if mask.noise_frames.shape != (spec.num_frames,):
        raise InvalidInput("noise mask length must equal the frame count")
    return mask.check().noise_frames


def run(spec, config=WpdConfig(), mask=None, threads=None, steering=None):
    """Iterative WPD over all bins of ``spec``.

    ``steering`` optionally injects fixed per-bin steering vectors
    ``(F, M)``, bypassing estimation.
    """
    M = spec.num_channels
    if M < 2:
        raise InvalidInput(f"{'mpdr' if config.mpdr_mode else 'wpd'} requires >= 2 channels")
    config.check_nyquist(spec.config.sample_rate_hz)
    noise_frames = _mask_frames(mask, spec, steering is None)
    freqs = spec.config.bin_frequencies()

    def solve(f):
        layout = config.layout_for(freqs[f], M)
        v = None if steering is None else SteeringVector(steering[f])
        return _wpd_bin(spec.data[:, f, :], layout, noise_frames, config, v)

    results = _map_bins(solve, spec.num_bins, threads)
    method = "mpdr" if config.mpdr_mode else (
        "wpd_wpe" if config.steering_mode is SteeringMode.FROM_WPE else "wpd")
    return _collect(method, spec, results, keep_derev=True)


def _mpdr_bin(x, noise_frames, loading_rel, steering=None):
    R = x.T @ x.conj()
    R = 0.5 * (R + R.conj().T)
    M = R.shape[0]
    trace = float(np.real(np.trace(R)))
    loading = loading_rel * trace / M if trace > 0 else 1.0
    try:
        factor = linalg.cho_factor(R + loading * np.eye(M), lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalFailure(f"spatial covariance is not positive definite: {exc}") from exc
    if steering is None:
        v, fallback = _steer(x, noise_frames, None)
    else:
        v, fallback = steering, False
    u = v.relative()
    num = linalg.cho_solve(factor, u)
    w = num / np.vdot(u, num).real
    d = x @ w.conj()
    residual = abs(np.vdot(w, v.v) - v.reference) / abs(v.reference)
    obj = -float(np.sum(np.abs(d) ** 2))
    return _BinResult(d[None], np.array([obj]), np.array([residual]),
                      np.ones((1, x.shape[0])), v.v, fallback, x.shape[0] < M)


def run_mpdr(spec, config=WpdConfig(), mask=None, threads=None, steering=None):
    """MPDR beamformer: spatial-only covariance, time-invariant power.

    Written directly rather than through the WPD loop so that the
    reduction of WPD to MPDR can be checked against it.
    """
    M = spec.num_channels
    if M < 2:
        raise InvalidInput("mpdr requires >= 2 channels")
    noise_frames = _mask_frames(mask, spec, steering is None)

    def solve(f):
        v = None if steering is None else SteeringVector(steering[f])
        return _mpdr_bin(spec.data[:, f, :], noise_frames, config.loading_rel, v)

    return _collect("mpdr", spec, _map_bins(solve, spec.num_bins, threads))


def run_wpe(spec, config=WpdConfig(), threads=None):
    """Standalone MIMO WPE; the output is the reference channel."""
    M = spec.num_channels
    config.check_nyquist(spec.config.sample_rate_hz)
    freqs = spec.config.bin_frequencies()

    def solve(f):
        x = spec.data[:, f, :]
        layout = StackingLayout(M, config.delay, config.filter_len_for(freqs[f]))
        history = []
        d, _ = wpe_bin(x, layout, config.iterations, config.loading_rel,
                       config.sigma_floor_rel, history)
        return d, np.array(history)

    results = _map_bins(solve, spec.num_bins, threads)
    derev = spec.with_data(np.stack([d for d, _ in results], axis=1))
    out = derev.data[:, :, 0]
    T, F = out.shape
    iters = config.iterations
    diag = IterationDiagnostics(
        objective=-np.stack([h for _, h in results], axis=-1),
        constraint_residual=np.zeros((iters, F)),
        sigma2=np.broadcast_to(np.mean(np.abs(derev.data) ** 2, axis=2), (iters, T, F)).copy(),
        steering=np.zeros((F, M), dtype=np.complex128),
        steering_fallback=np.zeros(F, dtype=bool),
        underdetermined=np.zeros(F, dtype=bool),
    )
    wave = synthesize(out, spec.config, spec.num_samples or None)
    return EnhancementResult("wpe", out, wave, diag, out[None], derev)


def run_cascade_wpe_mpdr(spec, config=WpdConfig(), mask=None, threads=None):
    """WPE on all channels, then MPDR steered from the dereverberated signal."""
    if spec.num_channels < 2:
        raise InvalidInput("wpe_mpdr requires >= 2 channels")
    wpe_result = run_wpe(spec, config, threads)
    result = run_mpdr(wpe_result.dereverberated, config, mask, threads)
    result.method = "wpe_mpdr"
    result.dereverberated = wpe_result.dereverberated
    result.extras["wpe_objective"] = wpe_result.diagnostics.objective
    return result


METHODS = ("wpe", "mpdr", "wpe_mpdr", "wpd", "wpd_wpe")


def enhance(spec, method, config=WpdConfig(), mask=None, threads=None):
    """Dispatch by method name; ``wpd`` keeps the input-derived steering vector."""
    if method == "wpe":
        return run_wpe(spec, config, threads)
    if method == "mpdr":
        return run_mpdr(spec, config, mask, threads)
    if method == "wpe_mpdr":
        return run_cascade_wpe_mpdr(spec, config, mask, threads)
    if method == "wpd":
        return run(spec, replace(config, steering_mode=SteeringMode.FROM_INPUT), mask, threads)
    if method == "wpd_wpe":
        return run(spec, replace(config, steering_mode=SteeringMode.FROM_WPE), mask, threads)
    raise InvalidInput(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
