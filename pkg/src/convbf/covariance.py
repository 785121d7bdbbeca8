"""Power-normalized temporal-spatial covariance and its inverses.

``R = sum_t xbar_t xbar_t^H / sigma_t^2`` is partitioned as::

    R = [[A,   P^H],
         [P,   R_tilde]]

with ``A`` the leading ``M x M`` block (current frame) and ``R_tilde``
the delayed-only block used by WPE.  ``R^{-1}`` is recovered from
``R_tilde^{-1}`` through the Schur complement of ``A``, so the WPE and
WPD solves share one factorization.
"""
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from . import kernels
from .errors import InvalidInput, NumericalFailure
from .model import PowerEstimate
from .stft import MultichannelSpectrogram

__all__ = [
    "CovarianceSet", "accumulate", "accumulate_bin", "factorize",
    "block_inverse_from_submatrix", "leading_inverse_columns",
]


@dataclass(frozen=True)
class CovarianceSet:
    R: np.ndarray
    num_channels: int
    loading: float = 0.0
    R_inv: np.ndarray = None
    R_tilde_inv: np.ndarray = None

    @property
    def dim(self):
        return self.R.shape[0]

    @property
    def R_tilde(self):
        M = self.num_channels
        return self.R[M:, M:]

    @property
    def cross(self):
        """``P = sum_t xbar_delayed_t x_t^H / sigma_t^2``, the lower-left block."""
        M = self.num_channels
        return self.R[M:, :M]

    @property
    def leading(self):
        M = self.num_channels
        return self.R[:M, :M]


def _hermitian(a):
    return 0.5 * (a + a.conj().T)


def accumulate_bin(x, sigma2, layout):
    """Covariance of one bin given its ``(T, M)`` frames."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidInput("need at least one frame to accumulate a covariance")
    if x.shape[1] != layout.num_channels:
        raise InvalidInput("channel count does not match layout")
    s = sigma2.sigma2 if isinstance(sigma2, PowerEstimate) else np.asarray(sigma2, float)
    if s.shape != (x.shape[0],):
        raise InvalidInput("sigma2 length must equal the frame count")
    R = kernels.weighted_covariance(x, 1.0 / s, layout.lags)
    return CovarianceSet(_hermitian(R), layout.num_channels)


def accumulate(spec, f, sigma2, layout):
    data = spec.data if isinstance(spec, MultichannelSpectrogram) else np.asarray(spec)
    if data.shape[0] == 0:
        raise InvalidInput("spectrogram has no frames")
    return accumulate_bin(data[:, f, :], sigma2, layout)


def _loading(R, loading_rel):
    D = R.shape[0]
    trace = float(np.real(np.trace(R)))
    if trace <= 0:
        # all-zero covariance: any positive loading yields the passthrough solve
        return 1.0
    return loading_rel * trace / D


def _chol_inverse(a, what):
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    try:
        factor = linalg.cho_factor(a, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"{what} is not positive definite: {exc}") from exc
    return _hermitian(linalg.cho_solve(factor, np.eye(n, dtype=a.dtype)))


def factorize(cov, loading_rel=1e-6, full=True):
    """Diagonally load ``R`` and compute its inverses by Cholesky.

    ``loading = loading_rel * trace(R) / D``. With ``full=False`` only
    ``R_tilde^{-1}`` is computed; ``R^{-1}`` is then available through
    :func:`block_inverse_from_submatrix`.
    """
    if loading_rel < 0:
        raise InvalidInput("loading_rel must be non-negative")
    loading = _loading(cov.R, loading_rel)
    M, D = cov.num_channels, cov.dim
    loaded = cov.R + loading * np.eye(D)
    R_tilde_inv = _chol_inverse(loaded[M:, M:], "R_tilde")
    R_inv = _chol_inverse(loaded, "R") if full else None
    return replace(cov, loading=loading, R_inv=R_inv, R_tilde_inv=R_tilde_inv)


def _schur(cov, G=None):
    if cov.R_tilde_inv is None:
        raise InvalidInput("covariance set has no R_tilde inverse; call factorize first")
    M = cov.num_channels
    A = cov.leading + cov.loading * np.eye(M)
    if G is None:
        G = cov.R_tilde_inv @ cov.cross
    S = _hermitian(A - cov.cross.conj().T @ G)
    S_inv = _chol_inverse(S, "Schur complement")
    return G, S_inv


def leading_inverse_columns(cov, G=None):
    """First ``M`` columns of ``R^{-1}`` from the Schur complement.

    ``G = R_tilde^{-1} P`` is the WPE prediction filter; passing it in
    avoids recomputing it.
    """
    G, S_inv = _schur(cov, G)
    return np.vstack([S_inv, -G @ S_inv])


def block_inverse_from_submatrix(cov):
    """Full ``(R + loading I)^{-1}`` assembled from ``R_tilde^{-1}``."""
    G, S_inv = _schur(cov)
    M, D = cov.num_channels, cov.dim
    out = np.empty((D, D), dtype=np.complex128)
    out[:M, :M] = S_inv
    out[M:, :M] = -G @ S_inv
    out[:M, M:] = out[M:, :M].conj().T
    out[M:, M:] = cov.R_tilde_inv + G @ S_inv @ G.conj().T
    return out
