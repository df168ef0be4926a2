"""Singular value thresholding, the proximal step of the trace-norm methods."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ..core import ModeMatrix
from ..exceptions import ContractViolation, NumericalFailure

__all__ = ["svt", "svt_array", "nuclear_norm"]


def _svd(a: np.ndarray):
    """Thin SVD with a gesvd fallback; raises NumericalFailure if both diverge."""
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        pass
    try:
        return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
    except Exception as exc:
        raise NumericalFailure(f"SVD did not converge for matrix of shape {a.shape}") from exc


def svt_array(a: np.ndarray, tau: float) -> np.ndarray:
    """U diag(max(s - tau, 0)) V^T of a raw float64 matrix."""
    u, s, vt = _svd(a)
    keep = s > tau
    if not keep.any():
        return np.zeros_like(a)
    return (u[:, keep] * (s[keep] - tau)) @ vt[keep]


def svt_gram_array(a: np.ndarray, tau: float) -> np.ndarray:
    """Same shrinkage as :func:`svt_array`, computed on the smaller Gram side.

    Forms the min(m, n)-sized Gram matrix and eigendecomposes it, which is
    several times faster than a full SVD for the unfolding shapes the
    iterative methods produce.  Components at or below tau are annihilated,
    so the sqrt(eps)-level noise the Gram form adds to tiny singular values
    never survives.  The iterative engines use this path; the public
    :func:`svt` keeps the direct SVD.
    """
    m, n = a.shape
    if m <= n:
        lam, u = np.linalg.eigh(a @ a.T)
        s = np.sqrt(np.clip(lam, 0.0, None))
        keep = s > tau
        if not keep.any():
            return np.zeros_like(a)
        uk = u[:, keep]
        return (uk * ((s[keep] - tau) / s[keep])) @ (uk.T @ a)
    lam, v = np.linalg.eigh(a.T @ a)
    s = np.sqrt(np.clip(lam, 0.0, None))
    keep = s > tau
    if not keep.any():
        return np.zeros_like(a)
    vk = v[:, keep]
    return (a @ (vk * ((s[keep] - tau) / s[keep]))) @ vk.T


def svt(m: ModeMatrix, tau: float) -> ModeMatrix:
    """Soft-threshold the singular values of a mode matrix by tau >= 0.

    Singular values at or below tau are annihilated; the rest shrink by tau.
    Non-expansive: the output Frobenius norm never exceeds the input's.
    """
    if tau < 0:
        raise ContractViolation(f"svt threshold must be >= 0, got {tau}")
    if not np.isfinite(m.data).all():
        raise ContractViolation("svt input must be finite")
    return ModeMatrix(mode=m.mode, data=svt_array(m.data, float(tau)))


def nuclear_norm(a: np.ndarray) -> float:
    """Sum of singular values (float64)."""
    try:
        s = np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError:
        s = scipy.linalg.svd(a, compute_uv=False, lapack_driver="gesvd")
    return float(s.sum())
