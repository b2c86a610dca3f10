"""Affine conditioning maps ``x -> A x + B y + c`` and square-root filters.

The maps are built from ensemble (or population) moments and an observed
value ``y_star``:

* ``enku_map``: ``A = I``, ``B = -K``, ``c = K y_star``.
* ``ld_map``: ``A = sqrt(S_x|y) S_x^{+/2}``, ``B = 0``.
* ``lot_map``: ``A = S_x^{+/2} (S_x^{1/2} S_x|y S_x^{1/2})^{1/2} S_x^{+/2}``, ``B = 0``.

Both deterministic maps use ``c = -A m_x + K (y_star - m_y) + m_x`` so the
analysis mean is ``m_x + K (y_star - m_y)``.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .ensemble import Ensemble, Moments
from .errors import InsufficientSamplesError, InvalidInputError


@dataclass(frozen=True)
class AffineConditioningMap:
    """The triple ``(A, B, c)`` of ``x -> A x + B y + c``."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = linalg.as_matrix(self.A, "A")
        B = linalg.as_matrix(self.B, "B")
        c = np.atleast_1d(np.array(self.c, dtype=np.float64))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or c.shape != (n,):
            raise InvalidInputError(
                f"inconsistent map shapes A {A.shape}, B {B.shape}, c {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("c has non-finite entries")
        for arr in (A, B, c):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def __call__(self, x, y) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        if x.shape[1] != self.n or y.shape[1] != self.m or x.shape[0] != y.shape[0]:
            raise InvalidInputError(
                f"map expects x with {self.n} and y with {self.m} columns, "
                f"got {x.shape} and {y.shape}")
        return x @ self.A.T + y @ self.B.T + self.c


@dataclass(frozen=True)
class AnalysisEnsemble:
    """Updated state particles, one row per forecast particle."""

    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise InvalidInputError(f"analysis particles must be (N, n), got {x.shape}")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[1]


def _y_star(mom: Moments, y_star) -> np.ndarray:
    ys = np.atleast_1d(np.asarray(y_star, dtype=np.float64))
    if ys.shape != (mom.m,):
        raise InvalidInputError(f"y_star has shape {ys.shape}, expected ({mom.m},)")
    if not np.all(np.isfinite(ys)):
        raise InvalidInputError("y_star has non-finite entries")
    return ys


def _mean_shift(mom: Moments, A, ys):
    return -A @ mom.m_x + mom.gain @ (ys - mom.m_y) + mom.m_x


def enku_map(mom: Moments, y_star) -> AffineConditioningMap:
    """Ensemble Kalman update ``x + K (y_star - y)``."""
    ys = _y_star(mom, y_star)
    return AffineConditioningMap(np.eye(mom.n), -mom.gain, mom.gain @ ys)


def ld_map(mom: Moments, y_star) -> AffineConditioningMap:
    """Deterministic square-root map ``sqrt(S_x|y) S_x^{+/2}`` (no y dependence).

    Raises
    ------
    NotPSDError
        If the conditional covariance is not PSD within tolerance.
    """
    ys = _y_star(mom, y_star)
    A = linalg.psd_sqrt(mom.cov_x_given_y) @ linalg.psd_sqrt_pinv(mom.cov_x)
    return AffineConditioningMap(A, np.zeros((mom.n, mom.m)), _mean_shift(mom, A, ys))


def lot_map(mom: Moments, y_star) -> AffineConditioningMap:
    """Optimal-transport map between the Gaussians ``N(m_x, S_x)`` and
    ``N(., S_x|y)``; ``A`` is symmetric PSD."""
    ys = _y_star(mom, y_star)
    root = linalg.psd_sqrt(mom.cov_x)
    root_pinv = linalg.psd_sqrt_pinv(mom.cov_x)
    middle = root @ mom.cov_x_given_y @ root
    A = root_pinv @ linalg.psd_sqrt(0.5 * (middle + middle.T)) @ root_pinv
    A = 0.5 * (A + A.T)
    return AffineConditioningMap(A, np.zeros((mom.n, mom.m)), _mean_shift(mom, A, ys))


def apply_map(cmap: AffineConditioningMap, e: Ensemble) -> AnalysisEnsemble:
    """Push every particle through the map."""
    if e.n != cmap.n or e.m != cmap.m:
        raise InvalidInputError(
            f"map is for n={cmap.n}, m={cmap.m}; ensemble has n={e.n}, m={e.m}")
    return AnalysisEnsemble(cmap(e.x, e.y))


def etkf_transform(e: Ensemble) -> np.ndarray:
    """Ensemble-space transform ``T = I - Yc^T (Yc Yc^T)^+ Yc``.

    ``Yc`` is the ``m x N`` matrix of observation anomalies. ``T`` is the
    orthogonal projector onto the complement of the row space of ``Yc``,
    so ``Xc T = Xc - K Yc``.
    """
    if e.size < 2:
        raise InsufficientSamplesError(f"transform needs at least 2 particles, got {e.size}")
    yc = (e.y - e.y.mean(axis=0)).T
    t = np.eye(e.size) - yc.T @ linalg.pinv(yc @ yc.T) @ yc
    return 0.5 * (t + t.T)


def eakf_svd_update(x_forecast, H, Gamma, y_star) -> AnalysisEnsemble:
    """Ensemble adjustment update with the SVD-based square root.

    For the linear model ``y = H x + noise`` with noise covariance
    ``Gamma``, anomalies are multiplied by ``A = F G C (I + D)^{-1/2} G^+ F^T``
    where ``Xc / sqrt(N-1) = F G U^T`` is a thin SVD restricted to the
    ``r`` nonzero singular values and ``G F^T H^T Gamma^{-1} H F G = C D C^T``
    with eigenvalues in descending order.
    The analysis covariance equals
    ``C_f - C_f H^T (H C_f H^T + Gamma)^{-1} H C_f`` and the mean is moved by
    the Kalman formula.

    Parameters
    ----------
    x_forecast : array_like, shape (N, n)
    H : array_like, shape (m, n)
    Gamma : array_like, shape (m, m)
        Nonsingular observation-noise covariance.
    y_star : array_like, shape (m,)
    """
    x = np.asarray(x_forecast, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    x = linalg.as_matrix(x, "x_forecast")
    N, n = x.shape
    if N < 2:
        raise InsufficientSamplesError(f"update needs at least 2 particles, got {N}")
    H = linalg.as_matrix(H, "H")
    gamma = linalg.symmetrize(Gamma, "Gamma")
    m = gamma.shape[0]
    if H.shape != (m, n):
        raise InvalidInputError(f"H has shape {H.shape}, expected ({m}, {n})")
    if linalg.numerical_rank(gamma) < m:
        raise InvalidInputError("Gamma is singular")
    ys = np.atleast_1d(np.asarray(y_star, dtype=np.float64))
    if ys.shape != (m,) or not np.all(np.isfinite(ys)):
        raise InvalidInputError(f"y_star must be a finite vector of length {m}")

    mean = x.mean(axis=0)
    xc = (x - mean).T
    F, g, _ = linalg.svd(xc / np.sqrt(N - 1))
    r = int(np.sum(g > linalg.default_rtol(xc) * g[0])) if g.size and g[0] > 0 else 0
    F, g = F[:, :r], g[:r]
    gamma_inv = np.linalg.inv(gamma)
    hfg = H @ F * g
    dec = linalg.eigh_desc(hfg.T @ gamma_inv @ hfg)
    C, d = dec.eigenvectors, np.clip(dec.eigenvalues, 0.0, None)
    # A depends on the eigenvector signs; fix them so that each column's
    # largest entry is positive, which gives A = I when H carries no information.
    if r:
        lead = C[np.argmax(np.abs(C), axis=0), np.arange(r)]
        C = C * np.where(lead < 0, -1.0, 1.0)
    A = (F * g) @ (C / np.sqrt(1.0 + d)) @ (F / g).T

    cov_f = (F * g**2) @ F.T
    innov = H @ cov_f @ H.T + gamma
    gain = np.linalg.solve(innov.T, (cov_f @ H.T).T).T
    mean_a = mean + gain @ (ys - H @ mean)
    return AnalysisEnsemble(mean_a + (A @ xc).T)
