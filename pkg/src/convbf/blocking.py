"""Numerical check of the determinant split of the MIMO beamformer's lag-0 matrix.

For ``W0 = [w0, B0]`` with ``w0^H v = v_ref`` and ``B0^H v = 0``::

    |det W0| = |v_ref| / ||v|| * det(B0^H B0)^{1/2}

so the Jacobian term of the likelihood separates into a steering-only
and a blocking-only factor.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import InvalidInput
from .model import SteeringVector

__all__ = ["BlockingMatrix", "make_blocking", "verify_det_identity", "projection_onto_steering"]


@dataclass(frozen=True)
class BlockingMatrix:
    B0: np.ndarray

    def residual(self, v):
        """``||B0^H v|| / (||B0|| ||v||)``."""
        v = v.v if isinstance(v, SteeringVector) else np.asarray(v)
        scale = np.linalg.norm(self.B0) * np.linalg.norm(v)
        return float(np.linalg.norm(self.B0.conj().T @ v) / scale) if scale else 0.0


def make_blocking(v):
    v = v.v if isinstance(v, SteeringVector) else np.asarray(v, dtype=np.complex128)
    if v.size < 2:
        raise InvalidInput("a blocking matrix needs at least two channels")
    if not np.any(v):
        raise InvalidInput("steering vector must be non-zero")
    # a full QR of v gives a unitary Q whose trailing columns span v's complement
    q, _ = linalg.qr(v.reshape(-1, 1), mode="full")
    return BlockingMatrix(q[:, 1:])


def projection_onto_steering(v):
    """The part of any feasible ``w0`` that lies along ``v``."""
    v = v.v if isinstance(v, SteeringVector) else np.asarray(v, dtype=np.complex128)
    return np.conj(v[0]) / np.vdot(v, v).real * v


def verify_det_identity(v, B0, w0, tol=1e-8):
    """Return ``(|det [w0, B0]|, |v_ref| / ||v|| * det(B0^H B0)^{1/2})``."""
    v = v.v if isinstance(v, SteeringVector) else np.asarray(v, dtype=np.complex128)
    B0 = B0.B0 if isinstance(B0, BlockingMatrix) else np.asarray(B0, dtype=np.complex128)
    w0 = np.asarray(w0, dtype=np.complex128)
    M = v.size
    if B0.shape != (M, M - 1) or w0.shape != (M,):
        raise InvalidInput("shapes must be v: (M,), B0: (M, M-1), w0: (M,)")
    ref = v[0]
    if abs(np.vdot(w0, v) - ref) > tol * abs(ref):
        raise InvalidInput("w0 violates the distortionless constraint")
    if np.linalg.norm(B0.conj().T @ v) > tol * np.linalg.norm(B0) * np.linalg.norm(v):
        raise InvalidInput("B0 does not block the steering vector")
    lhs = abs(np.linalg.det(np.column_stack([w0, B0])))
    gram = np.real(np.linalg.det(B0.conj().T @ B0))
    rhs = abs(ref) / np.linalg.norm(v) * np.sqrt(max(gram, 0.0))
    return float(lhs), float(rhs)
