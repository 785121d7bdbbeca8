"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in the compiled
``_ext`` module; :mod:`convbf.kernels` picks one at import time.
"""
import numpy as np


def stack_frames(x, lags):
    """Delayed stack ``(T, D)``; row ``t`` is ``[x[t-lags[0]], x[t-lags[1]], ...]``."""
    x = np.asarray(x)
    T, M = x.shape
    out = np.zeros((T, len(lags) * M), dtype=np.result_type(x, np.complex128))
    for i, lag in enumerate(lags):
        if lag < T:
            out[lag:, i * M:(i + 1) * M] = x[:T - lag]
    return out


def weighted_covariance(x, weights, lags):
    """``sum_t w_t xbar_t xbar_t^H`` without forming a Python-level loop over t."""
    xbar = stack_frames(x, lags)
    return (xbar * weights[:, None]).T @ xbar.conj()


def apply_filter(x, w, lags):
    """``out[t, k] = w[:, k]^H xbar_t``; ``w`` is ``(D, K)``."""
    return stack_frames(x, lags) @ w.conj()


def levinson(r):
    """Batched Levinson-Durbin.

    ``r`` holds autocorrelations ``(N, p + 1)``. Returns predictor
    polynomials ``a`` with ``a[:, 0] == 1`` and final prediction errors.
    Rows with ``r[:, 0] <= 0`` yield ``a = [1, 0, ...]``.
    """
    r = np.asarray(r, dtype=np.float64)
    n, p1 = r.shape
    order = p1 - 1
    a = np.zeros((n, p1))
    a[:, 0] = 1.0
    err = r[:, 0].copy()
    live = err > 0
    for i in range(1, order + 1):
        acc = r[:, i] + np.einsum("nj,nj->n", a[:, 1:i], r[:, i - 1:0:-1])
        k = np.zeros(n)
        np.divide(-acc, err, out=k, where=live)
        prev = a[:, 1:i].copy()
        a[:, 1:i] = prev + k[:, None] * prev[:, ::-1]
        a[:, i] = k
        err = err * (1.0 - k * k)
        live = live & (err > 0)
    return a, err


def lpc_cepstrum(a, num_ceps):
    """Cepstrum ``c_1..c_num_ceps`` of the all-pole model ``1 / A(z)``."""
    a = np.asarray(a, dtype=np.float64)
    n, p1 = a.shape
    order = p1 - 1
    c = np.zeros((n, num_ceps + 1))
    for k in range(1, num_ceps + 1):
        acc = -a[:, k] if k <= order else np.zeros(n)
        for j in range(max(1, k - order), k):
            acc = acc - (j / k) * c[:, j] * a[:, k - j]
        c[:, k] = acc
    return c[:, 1:]
