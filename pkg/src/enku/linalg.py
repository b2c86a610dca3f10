"""Dense linear-algebra kernels shared by the update maps.

All functions take array_like input, reject non-finite entries and return
new arrays; inputs are never modified.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import InvalidInputError, NotPSDError

# Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
SYMMETRY_RTOL = 1e-8
PSD_RTOL = 1e-10


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Validate ``m`` as a finite 2-D float array (scalars become 1x1)."""
    arr = np.array(m, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def default_rtol(m: np.ndarray) -> float:
    """Numerical-rank cutoff relative to the largest singular value."""
    return np.finfo(np.float64).eps * max(m.shape)


def svd(m) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin singular value decomposition ``m = U diag(S) V^T``.

    Returns
    -------
    U : ndarray, shape (r, k)
    S : ndarray, shape (k,)
        Nonnegative, descending.
    V : ndarray, shape (c, k)
        Right singular vectors as columns (not transposed).
    """
    arr = as_matrix(m)
    if arr.size == 0:
        k = min(arr.shape)
        return np.zeros((arr.shape[0], k)), np.zeros(k), np.zeros((arr.shape[1], k))
    u, s, vt = np.linalg.svd(arr, full_matrices=False)
    return u, s, vt.T


def pinv(m, rtol: Optional[float] = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse.

    Singular values at or below ``rtol * sigma_max`` are treated as zero;
    the default ``rtol`` is ``eps * max(rows, cols)``.
    """
    arr = as_matrix(m)
    if rtol is None:
        rtol = default_rtol(arr)
    if rtol < 0:
        raise InvalidInputError(f"rtol must be nonnegative, got {rtol}")
    u, s, v = svd(arr)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(arr.T.shape)
    keep = s > rtol * s[0]
    return (v[:, keep] / s[keep]) @ u[:, keep].T


def numerical_rank(m, rtol: Optional[float] = None) -> int:
    arr = as_matrix(m)
    if rtol is None:
        rtol = default_rtol(arr)
    s = np.linalg.svd(arr, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def col_projector(m, rtol: Optional[float] = None) -> np.ndarray:
    """Orthogonal projector ``M M^+`` onto the column space of ``m``."""
    arr = as_matrix(m)
    if rtol is None:
        rtol = default_rtol(arr)
    u, s, _ = svd(arr)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((arr.shape[0], arr.shape[0]))
    basis = u[:, s > rtol * s[0]]
    return basis @ basis.T


def symmetrize(m, name: str = "matrix") -> np.ndarray:
    """Return ``(M + M^T) / 2`` after checking ``M`` is square and nearly symmetric."""
    arr = as_matrix(m, name)
    if arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {arr.shape}")
    scale = max(1.0, float(np.abs(arr).max(initial=0.0)))
    if np.abs(arr - arr.T).max(initial=0.0) > SYMMETRY_RTOL * scale:
        raise InvalidInputError(f"{name} is not symmetric")
    return 0.5 * (arr + arr.T)


def eigh_desc(m, name: str = "matrix") -> SpectralDecomposition:
    """Symmetric eigendecomposition with eigenvalues in descending order."""
    sym = symmetrize(m, name)
    w, v = np.linalg.eigh(sym)
    # stable sort keeps the solver's basis order inside repeated eigenvalues
    order = np.argsort(-w, kind="stable")
    return SpectralDecomposition(eigenvalues=w[order], eigenvectors=v[:, order])


def _psd_spectrum(m, name):
    dec = eigh_desc(m, name)
    w = dec.eigenvalues
    tol = PSD_RTOL * max(1.0, float(w[0]) if w.size else 0.0)
    if w.size and w[-1] < -tol:
        raise NotPSDError(f"{name} has eigenvalue {w[-1]:.3e} below -{tol:.1e}")
    return np.clip(w, 0.0, None), dec.eigenvectors


def psd_sqrt(m) -> np.ndarray:
    """Principal square root of a symmetric positive semidefinite matrix.

    Eigenvalues in ``[-tol_psd, 0)`` with ``tol_psd = 1e-10 * max(1, lambda_max)``
    are clamped to zero; anything more negative raises :class:`NotPSDError`.
    """
    w, v = _psd_spectrum(m, "matrix")
    root = (v * np.sqrt(w)) @ v.T
    return 0.5 * (root + root.T)


def psd_sqrt_pinv(m) -> np.ndarray:
    """Principal square root of the pseudoinverse, ``sqrt(M^+)``.

    Eigenvalues at or below the cutoff of :func:`pinv` are treated as zero.
    """
    w, v = _psd_spectrum(m, "matrix")
    cut = default_rtol(v) * (w[0] if w.size else 0.0)
    keep = w > cut
    if not np.any(keep):
        return np.zeros_like(v)
    vk = v[:, keep]
    root = (vk / np.sqrt(w[keep])) @ vk.T
    return 0.5 * (root + root.T)
