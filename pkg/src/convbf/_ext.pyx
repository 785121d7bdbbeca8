# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; signatures mirror :mod:`convbf._fallback`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from scipy.linalg.cython_blas cimport zgemm, zherk

cnp.import_array()


def stack_frames(x, lags):
    cdef double complex[:, ::1] xv = np.ascontiguousarray(x, dtype=np.complex128)
    cdef Py_ssize_t[::1] lv = np.ascontiguousarray(lags, dtype=np.intp)
    cdef Py_ssize_t T = xv.shape[0], M = xv.shape[1], L = lv.shape[0]
    out = np.zeros((T, L * M), dtype=np.complex128)
    cdef double complex[:, ::1] ov = out
    cdef Py_ssize_t t, i, m, lag
    with nogil:
        for t in range(T):
            for i in range(L):
                lag = lv[i]
                if t >= lag:
                    for m in range(M):
                        ov[t, i * M + m] = xv[t - lag, m]
    return out


def weighted_covariance(x, weights, lags):
    cdef double complex[:, ::1] xv = np.ascontiguousarray(x, dtype=np.complex128)
    cdef double[::1] wv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t[::1] lv = np.ascontiguousarray(lags, dtype=np.intp)
    cdef Py_ssize_t T = xv.shape[0], M = xv.shape[1], L = lv.shape[0]
    cdef Py_ssize_t D = L * M
    # row t of scaled holds sqrt(w_t) * xbar_t; read column-major it is D x T
    scaled = np.zeros((T, D), dtype=np.complex128)
    cdef double complex[:, ::1] sv = scaled
    cdef Py_ssize_t t, i, j, m, lag
    cdef double g
    with nogil:
        for t in range(T):
            g = sqrt(wv[t]) if wv[t] > 0 else 0.0
            for i in range(L):
                lag = lv[i]
                if t >= lag:
                    for m in range(M):
                        sv[t, i * M + m] = xv[t - lag, m] * g
    out = np.zeros((D, D), dtype=np.complex128)
    if D == 0 or T == 0:
        return out
    cdef double complex[:, ::1] cv = out
    cdef char uplo = b'U'
    cdef char trans = b'N'
    cdef int n = <int>D, k = <int>T, lda = <int>D, ldc = <int>D
    cdef double alpha = 1.0, beta = 0.0
    zherk(&uplo, &trans, &n, &k, &alpha, &sv[0, 0], &lda, &beta, &cv[0, 0], &ldc)
    # column-major upper triangle == row-major lower triangle of conj(R)
    with nogil:
        for i in range(D):
            cv[i, i] = cv[i, i].real
            for j in range(i):
                cv[j, i] = cv[i, j]
                cv[i, j] = cv[i, j].conjugate()
    return out


def apply_filter(x, w, lags):
    cdef double complex[:, ::1] xv = np.ascontiguousarray(x, dtype=np.complex128)
    cdef double complex[:, ::1] wv = np.ascontiguousarray(w, dtype=np.complex128)
    cdef Py_ssize_t[::1] lv = np.ascontiguousarray(lags, dtype=np.intp)
    cdef Py_ssize_t T = xv.shape[0], M = xv.shape[1], L = lv.shape[0]
    cdef Py_ssize_t K = wv.shape[1], D = L * M
    out = np.zeros((T, K), dtype=np.complex128)
    if T == 0 or K == 0 or D == 0:
        return out
    # conj(out) = conj(xbar) @ w; read column-major this is w^T conj(xbar)^T,
    # which zgemm takes without any transposition
    stacked = np.zeros((T, D), dtype=np.complex128)
    cdef double complex[:, ::1] sv = stacked
    cdef double complex[:, ::1] ov = out
    cdef Py_ssize_t t, i, k, m, lag
    with nogil:
        for t in range(T):
            for i in range(L):
                lag = lv[i]
                if t >= lag:
                    for m in range(M):
                        sv[t, i * M + m] = xv[t - lag, m].conjugate()
    cdef char trans = b'N'
    cdef int mm = <int>K, nn = <int>T, kk = <int>D
    cdef double complex alpha = 1.0, beta = 0.0
    zgemm(&trans, &trans, &mm, &nn, &kk, &alpha, &wv[0, 0], &mm, &sv[0, 0], &kk,
          &beta, &ov[0, 0], &mm)
    with nogil:
        for t in range(T):
            for k in range(K):
                ov[t, k] = ov[t, k].conjugate()
    return out


def levinson(r):
    cdef double[:, ::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef Py_ssize_t n = rv.shape[0], p1 = rv.shape[1]
    a = np.zeros((n, p1))
    err = np.zeros(n)
    cdef double[:, ::1] av = a
    cdef double[::1] ev = err
    cdef double[::1] tmp = np.zeros(p1)
    cdef Py_ssize_t f, i, j
    cdef double e, acc, k
    with nogil:
        for f in range(n):
            av[f, 0] = 1.0
            e = rv[f, 0]
            for i in range(1, p1):
                if e <= 0:
                    break
                acc = rv[f, i]
                for j in range(1, i):
                    acc = acc + av[f, j] * rv[f, i - j]
                k = -acc / e
                for j in range(1, i):
                    tmp[j] = av[f, j] + k * av[f, i - j]
                for j in range(1, i):
                    av[f, j] = tmp[j]
                av[f, i] = k
                e = e * (1.0 - k * k)
            ev[f] = e
    return a, err


def lpc_cepstrum(a, Py_ssize_t num_ceps):
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0], order = av.shape[1] - 1
    c = np.zeros((n, num_ceps + 1))
    cdef double[:, ::1] cv = c
    cdef Py_ssize_t f, k, j, lo
    cdef double acc
    with nogil:
        for f in range(n):
            for k in range(1, num_ceps + 1):
                acc = -av[f, k] if k <= order else 0.0
                lo = k - order if k - order > 1 else 1
                for j in range(lo, k):
                    acc = acc - (<double>j / k) * cv[f, j] * av[f, k - j]
                cv[f, k] = acc
    return c[:, 1:]
