"""Ensembles of joint particles, their empirical moments, and CSV I/O.

An ensemble holds ``N`` particles ``(x_i, y_i)`` with ``x_i`` in ``R^n`` and
``y_i`` in ``R^m``. Generators may attach the latent draws ``z_i`` used to
build the particles; update methods never look at them.
"""

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import linalg
from .errors import InsufficientSamplesError, InvalidInputError, ParseError


def _block(arr, name, rows=None):
    a = np.array(arr, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[1] < 1:
        raise InvalidInputError(f"{name} must be an (N, d) array with d >= 1, got shape {a.shape}")
    if rows is not None and a.shape[0] != rows:
        raise InvalidInputError(f"{name} has {a.shape[0]} rows, expected {rows}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Ensemble:
    """Immutable ensemble of joint particles.

    Parameters
    ----------
    x : array_like, shape (N, n)
        State components.
    y : array_like, shape (N, m)
        Observation components.
    z : array_like, shape (N, n), optional
        Latent draws behind ``x`` (oracle use only).
    """

    x: np.ndarray
    y: np.ndarray
    z: Optional[np.ndarray] = None

    def __post_init__(self):
        x = _block(self.x, "x")
        if x.shape[0] < 1:
            raise InvalidInputError("ensemble needs at least one particle")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", _block(self.y, "y", x.shape[0]))
        if self.z is not None:
            z = _block(self.z, "z", x.shape[0])
            if z.shape[1] != x.shape[1]:
                raise InvalidInputError(f"z has dimension {z.shape[1]}, expected {x.shape[1]}")
            object.__setattr__(self, "z", z)

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.y.shape[1]

    def permuted(self, order) -> "Ensemble":
        order = np.asarray(order)
        z = None if self.z is None else self.z[order]
        return Ensemble(self.x[order], self.y[order], z)


@dataclass(frozen=True)
class Moments:
    """Empirical means, covariance blocks (1/(N-1) normalisation) and gain."""

    m_x: np.ndarray
    m_y: np.ndarray
    cov_x: np.ndarray
    cov_y: np.ndarray
    cov_xy: np.ndarray
    cov_x_given_y: np.ndarray
    gain: np.ndarray

    @property
    def n(self) -> int:
        return self.m_x.shape[0]

    @property
    def m(self) -> int:
        return self.m_y.shape[0]


def kalman_gain(cov_xy, cov_y) -> np.ndarray:
    """``K = cov_xy pinv(cov_y)``."""
    return linalg.as_matrix(cov_xy, "cov_xy") @ linalg.pinv(cov_y)


def moments_from_blocks(m_x, m_y, cov_x, cov_y, cov_xy) -> Moments:
    """Assemble :class:`Moments` from given (e.g. population) blocks."""
    m_x = np.atleast_1d(np.asarray(m_x, dtype=np.float64))
    m_y = np.atleast_1d(np.asarray(m_y, dtype=np.float64))
    cov_x = linalg.symmetrize(np.atleast_2d(cov_x), "cov_x")
    cov_y = linalg.symmetrize(np.atleast_2d(cov_y), "cov_y")
    cov_xy = linalg.as_matrix(np.atleast_2d(cov_xy), "cov_xy")
    n, m = m_x.size, m_y.size
    if cov_x.shape != (n, n) or cov_y.shape != (m, m) or cov_xy.shape != (n, m):
        raise InvalidInputError("moment blocks have inconsistent shapes")
    gain = kalman_gain(cov_xy, cov_y)
    cond = cov_x - gain @ cov_xy.T
    cond = 0.5 * (cond + cond.T)
    return Moments(m_x, m_y, cov_x, cov_y, cov_xy, cond, gain)


def moments(e: Ensemble) -> Moments:
    """Sample moments of an ensemble.

    Raises
    ------
    InsufficientSamplesError
        If the ensemble has fewer than two particles.
    """
    if e.size < 2:
        raise InsufficientSamplesError(f"moments need at least 2 particles, got {e.size}")
    m_x = e.x.mean(axis=0)
    m_y = e.y.mean(axis=0)
    dx = e.x - m_x
    dy = e.y - m_y
    scale = 1.0 / (e.size - 1)
    cov_x = scale * (dx.T @ dx)
    cov_y = scale * (dy.T @ dy)
    cov_xy = scale * (dx.T @ dy)
    return moments_from_blocks(m_x, m_y, cov_x, cov_y, cov_xy)


# ---------------------------------------------------------------------------
# CSV I/O


def format_float(v: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(v))


def write_ensemble(e: Ensemble, path, include_z: bool = False) -> None:
    """Write ``x1..xn,y1..ym[,z1..zn]`` with round-trip exact decimals."""
    header = [f"x{i + 1}" for i in range(e.n)] + [f"y{i + 1}" for i in range(e.m)]
    blocks = [e.x, e.y]
    if include_z:
        if e.z is None:
            raise InvalidInputError("ensemble carries no z draws")
        header += [f"z{i + 1}" for i in range(e.n)]
        blocks.append(e.z)
    data = np.hstack(blocks)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in data:
                fh.write(",".join(format_float(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write ensemble to {path}: {exc}") from exc


def write_points(points, path) -> None:
    """Write a point cloud (the x-only variant of the ensemble format)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    header = [f"x{i + 1}" for i in range(pts.shape[1])]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in pts:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def _parse_header(cells, path):
    groups = {"x": [], "y": [], "z": []}
    for col, name in enumerate(cells, start=1):
        name = name.strip()
        if len(name) < 2 or name[0] not in groups or not name[1:].isdigit():
            raise ParseError(f"{path}: header column {col}: unexpected name {name!r}")
        groups[name[0]].append((col, int(name[1:])))
    order = [c[0] for g in ("x", "y", "z") for c in groups[g]]
    if order != sorted(order):
        raise ParseError(f"{path}: header must list x columns, then y, then optional z")
    for key, cols in groups.items():
        idx = [i for _, i in cols]
        if idx != list(range(1, len(idx) + 1)):
            raise ParseError(f"{path}: header {key} columns must be numbered 1..{len(idx)}")
    return len(groups["x"]), len(groups["y"]), len(groups["z"])


def _read_table(path):
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: empty file, expected a header line")
    header = rows[0]
    body = []
    for line, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and row[0].strip() == ""):
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}: row {line} has {len(row)} fields, header has {len(header)}")
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {line}, column {col} ({header[col - 1]}): "
                                 f"not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise ParseError(f"{path}: row {line}, column {col} ({header[col - 1]}): "
                                 f"non-finite value {cell!r}")
            vals.append(v)
        body.append(vals)
    return header, np.array(body, dtype=np.float64).reshape(len(body), len(header))


def read_ensemble(path) -> Ensemble:
    """Read an ensemble CSV written by :func:`write_ensemble`.

    Raises
    ------
    ParseError
        Malformed header, ragged rows or non-finite cells; the message
        names the row and column.
    """
    header, data = _read_table(path)
    n, m, nz = _parse_header(header, path)
    if n < 1 or m < 1:
        raise ParseError(f"{path}: header needs at least one x and one y column")
    if nz not in (0, n):
        raise ParseError(f"{path}: header has {nz} z columns, expected 0 or {n}")
    if data.shape[0] < 1:
        raise ParseError(f"{path}: no particles")
    z = data[:, n + m:] if nz else None
    return Ensemble(data[:, :n], data[:, n:n + m], z)


def read_points(path) -> np.ndarray:
    """Read a point cloud CSV (header ``x1..xd``)."""
    header, data = _read_table(path)
    n, m, nz = _parse_header(header, path)
    if n < 1 or m or nz:
        raise ParseError(f"{path}: point cloud header must be x1..xd only")
    if data.shape[0] < 1:
        raise ParseError(f"{path}: no points")
    return data
