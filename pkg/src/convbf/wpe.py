"""MIMO weighted prediction error dereverberation.

The filter is read off the same covariance the WPD solver uses:
``G = R_tilde^{-1} P``, so no second accumulation pass is needed.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .covariance import accumulate_bin, factorize
from .errors import InvalidInput
from .model import PowerEstimate, StackingLayout, sigma_floor

__all__ = ["PredictionFilter", "wpe_filter", "dereverberate", "dereverberate_bin",
           "wpe_bin", "prediction_cost"]


@dataclass(frozen=True)
class PredictionFilter:
    G: np.ndarray
    layout: StackingLayout

    def __post_init__(self):
        D, M = self.layout.stacked_dim, self.layout.num_channels
        if self.G.shape != (D - M, M):
            raise InvalidInput(f"filter shape {self.G.shape} != {(D - M, M)}")
        if not np.all(np.isfinite(self.G)):
            raise InvalidInput("prediction filter is not finite")

    @classmethod
    def zeros(cls, layout):
        D, M = layout.stacked_dim, layout.num_channels
        return cls(np.zeros((D - M, M), dtype=np.complex128), layout)


def wpe_filter(cov, layout):
    """Prediction filter from a factorized covariance set."""
    if cov.R_tilde_inv is None:
        raise InvalidInput("covariance set has no R_tilde inverse; call factorize first")
    if cov.dim != layout.stacked_dim:
        raise InvalidInput("covariance dimension does not match layout")
    return PredictionFilter(cov.R_tilde_inv @ cov.cross, layout)


def dereverberate_bin(x, filt):
    """``x_t - G^H xbar_delayed_t`` for every frame of one bin."""
    x = np.asarray(x, dtype=np.complex128)
    if filt.layout.num_taps == 0:
        return x.copy()
    lags = filt.layout.lags[1:]
    return x - kernels.apply_filter(x, filt.G, lags)


def dereverberate(spec, filters):
    """Apply one prediction filter per bin; ``filters[f]`` may be None (no-op)."""
    if len(filters) != spec.num_bins:
        raise InvalidInput(f"need {spec.num_bins} filters, got {len(filters)}")
    out = np.array(spec.data, dtype=np.complex128, copy=True)
    for f, filt in enumerate(filters):
        if filt is None:
            continue
        if filt.layout.num_channels != spec.num_channels:
            raise InvalidInput("filter channel count does not match spectrogram")
        out[:, f, :] = dereverberate_bin(spec.data[:, f, :], filt)
    return spec.with_data(out)


def prediction_cost(d, sigma2):
    """Negative log-likelihood of the shared-power WPE model (up to constants)."""
    M = d.shape[1]
    return float(np.sum(np.sum(np.abs(d) ** 2, axis=1) / sigma2) + M * np.sum(np.log(sigma2)))


def wpe_bin(x, layout, iterations=3, loading_rel=1e-6, sigma_floor_rel=1e-10,
            history=None):
    """Standalone iterative WPE for one bin.

    The time-varying power is shared across channels and re-estimated as
    the channel mean of the dereverberated power.  Returns the
    dereverberated ``(T, M)`` frames and the final filter.
    """
    floor = sigma_floor(x, sigma_floor_rel)
    sigma = PowerEstimate(np.mean(np.abs(x) ** 2, axis=1), floor)
    d, filt = x, PredictionFilter.zeros(layout)
    for _ in range(iterations):
        cov = factorize(accumulate_bin(x, sigma, layout), loading_rel, full=False)
        filt = wpe_filter(cov, layout)
        d = dereverberate_bin(x, filt)
        sigma = PowerEstimate(np.mean(np.abs(d) ** 2, axis=1), floor)
        if history is not None:
            history.append(prediction_cost(d, sigma.sigma2))
    return d, filt
