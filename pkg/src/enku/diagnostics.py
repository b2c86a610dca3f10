"""Sample-based probes of the structures that allow non-Kalman exact maps.

* :func:`cov_rank_check` looks for a singular sample covariance.
* :func:`cyclic_symmetry_stat` measures how far a planar cloud is from
  invariance under rotation by ``2 pi / k``, via its empirical
  characteristic function.
* :func:`translation_residual` tests whether two conditional clouds differ
  only by a shift.

These are descriptive statistics, not calibrated hypothesis tests.
"""

from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from . import linalg
from .errors import InsufficientSamplesError, InvalidInputError
from .wasserstein import as_cloud, w2_exact

DEFAULT_DIRECTIONS = 64
DEFAULT_RADII = (0.25, 0.5, 1.0, 2.0)
RANK_RTOL = 1e-10
_CHUNK = 4096


@dataclass(frozen=True)
class SymmetryReport:
    """Summary of the symmetry probes for one sample set."""

    smallest_eigenvalue: float
    numerical_rank: int
    cyc_statistic: Dict[int, float]
    translation_residual: Optional[float] = None
    translation_shift: Optional[Tuple[float, ...]] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cyc_statistic"] = {str(k): v for k, v in self.cyc_statistic.items()}
        return d


def _samples(samples, min_count=1):
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] < 1:
        raise InvalidInputError(f"samples must be an (N, d) array, got shape {x.shape}")
    if x.shape[0] < min_count:
        raise InsufficientSamplesError(f"need at least {min_count} samples, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("samples have non-finite entries")
    return x


def cov_rank_check(samples, tol: float = RANK_RTOL) -> Tuple[float, int]:
    """Smallest eigenvalue and numerical rank of the sample covariance.

    The rank counts eigenvalues above ``tol * lambda_max``.
    """
    x = _samples(samples, min_count=2)
    cov = np.cov(x, rowvar=False).reshape(x.shape[1], x.shape[1])
    w = linalg.eigh_desc(cov).eigenvalues
    if w[0] <= 0:
        return float(w[-1]), 0
    return float(w[-1]), int(np.sum(w > tol * w[0]))


def default_grid(directions: int = DEFAULT_DIRECTIONS, radii=DEFAULT_RADII) -> np.ndarray:
    """Frequencies ``r (cos a, sin a)`` on evenly spaced directions."""
    ang = 2.0 * np.pi * np.arange(directions) / directions
    unit = np.column_stack([np.cos(ang), np.sin(ang)])
    return np.concatenate([r * unit for r in radii])


def _ecf(x, grid):
    re = np.zeros(grid.shape[0])
    im = np.zeros(grid.shape[0])
    for start in range(0, x.shape[0], _CHUNK):
        phase = x[start:start + _CHUNK] @ grid.T
        re += np.cos(phase).sum(axis=0)
        im += np.sin(phase).sum(axis=0)
    return (re + 1j * im) / x.shape[0]


def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def cyclic_symmetry_stat(samples2d, k: int, grid=None, centered: bool = True) -> float:
    """``max_t |phi(t) - phi(R^T t)|`` with ``R`` the rotation by ``2 pi / k``.

    ``phi`` is the empirical characteristic function of the samples (after
    subtracting their mean unless ``centered`` is false). The result lies
    in ``[0, 2]``; ``k = 1`` gives exactly 0.
    """
    x = _samples(samples2d)
    if x.shape[1] != 2:
        raise InvalidInputError(f"cyclic statistic needs planar samples, got dimension {x.shape[1]}")
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise InvalidInputError(f"order k must be a positive integer, got {k!r}")
    t = default_grid() if grid is None else np.atleast_2d(np.asarray(grid, dtype=np.float64))
    if t.size == 0:
        raise InvalidInputError("frequency grid is empty")
    if t.ndim != 2 or t.shape[1] != 2 or not np.all(np.isfinite(t)):
        raise InvalidInputError("frequency grid must be a finite (G, 2) array")
    if k == 1:
        return 0.0
    if centered:
        x = x - x.mean(axis=0)
    rotated = t @ rotation(2.0 * np.pi / k)
    diff = np.abs(_ecf(x, t) - _ecf(x, rotated))
    return float(diff.max())


def translation_residual(cond_a, cond_b, **w2_options) -> Tuple[np.ndarray, float]:
    """Mean shift from ``cond_a`` to ``cond_b`` and the W2 distance left
    after applying it."""
    a = as_cloud(cond_a).points
    b = as_cloud(cond_b).points
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError(f"clouds have dimensions {a.shape[1]} and {b.shape[1]}")
    shift = b.mean(axis=0) - a.mean(axis=0)
    if a is b or (a.shape == b.shape and np.array_equal(a, b)):
        return np.zeros(a.shape[1]), 0.0
    return shift, w2_exact(a + shift, b, **w2_options).distance


def symmetry_report(samples, orders=(2, 3, 4, 6), pair=None, tol: float = RANK_RTOL,
                    centered: bool = True) -> SymmetryReport:
    """Run every probe that applies to ``samples`` (and the optional ``pair``)."""
    x = _samples(samples, min_count=2)
    smallest, rank = cov_rank_check(x, tol)
    cyc = {}
    if x.shape[1] == 2:
        cyc = {int(k): cyclic_symmetry_stat(x, int(k), centered=centered) for k in orders}
    res = shift = None
    if pair is not None:
        s, res = translation_residual(x, pair)
        shift = tuple(float(v) for v in s)
    return SymmetryReport(smallest, rank, cyc, res, shift)
