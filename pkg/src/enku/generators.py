"""Samplers for the state/observation laws and the joints built from them.

Distributions are small frozen dataclasses; :func:`sample` draws ``(N, d)``
arrays from any of them. Joint models realise ``(Z + M Y, Y)`` with ``Z``
and ``Y`` independent, so their posteriors are exactly ``Law(Z + M y_star)``.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import special

from . import linalg
from .ensemble import Ensemble, Moments, moments_from_blocks
from .errors import InvalidInputError

SDEC_TOLERANCE = 1e-12


def _vector(v, name):
    arr = np.atleast_1d(np.array(v, dtype=np.float64))
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be a finite vector")
    return arr


def _psd(cov, name, dim):
    c = linalg.symmetrize(np.atleast_2d(cov), name)
    if c.shape != (dim, dim):
        raise InvalidInputError(f"{name} has shape {c.shape}, expected ({dim}, {dim})")
    # psd_sqrt raises NotPSDError for clearly indefinite input
    root = linalg.psd_sqrt(c)
    return c, root


@dataclass(frozen=True)
class Gaussian:
    """``N(mean, cov)``; ``cov`` may be singular (including zero)."""

    mean: np.ndarray
    cov: np.ndarray
    root: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = _vector(self.mean, "mean")
        cov, root = _psd(self.cov, "cov", mean.size)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "root", root)

    @property
    def dim(self) -> int:
        return self.mean.size

    def population_mean(self) -> np.ndarray:
        return self.mean.copy()

    def population_cov(self) -> np.ndarray:
        return self.cov.copy()


@dataclass(frozen=True)
class GaussianMixture:
    """``sum_k weights[k] N(means[k], covs[k])``."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    roots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = _vector(self.weights, "weights")
        means = np.array(self.means, dtype=np.float64)
        if means.ndim == 1:
            means = means[:, None]
        k = w.size
        if means.ndim != 2 or means.shape[0] != k or not np.all(np.isfinite(means)):
            raise InvalidInputError(f"means must be a finite ({k}, d) array")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidInputError("mixture weights must be nonnegative and sum to 1")
        d = means.shape[1]
        covs = np.array(self.covs, dtype=np.float64).reshape(k, d, d)
        pairs = [_psd(c, f"covs[{i}]", d) for i, c in enumerate(covs)]
        object.__setattr__(self, "weights", w / w.sum())
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", np.array([p[0] for p in pairs]))
        object.__setattr__(self, "roots", np.array([p[1] for p in pairs]))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def population_mean(self) -> np.ndarray:
        return self.weights @ self.means

    def population_cov(self) -> np.ndarray:
        mu = self.population_mean()
        dev = self.means - mu
        within = np.einsum("k,kij->ij", self.weights, self.covs)
        return within + (dev.T * self.weights) @ dev


@dataclass(frozen=True)
class Ring:
    """Planar ring law in polar form.

    A ring ``r`` is chosen uniformly among ``n_rings`` radii evenly spaced
    on ``[radius_min, radius_max]`` and an angular mode ``j`` uniformly in
    ``1..n_modes``. Then ``theta ~ vonMises(2 pi j / n_modes, kappa)``,
    ``rho ~ N(radius_r, sigma^2)`` and the sample is
    ``(rho cos theta, rho sin theta)``.
    """

    n_rings: int = 3
    n_modes: int = 6
    radius_min: float = 1.4
    radius_max: float = 4.0
    kappa: float = 25.0
    sigma: float = 0.2

    def __post_init__(self):
        if int(self.n_rings) < 1 or int(self.n_modes) < 1:
            raise InvalidInputError("ring and mode counts must be at least 1")
        if not 0 < self.radius_min <= self.radius_max:
            raise InvalidInputError("radii must satisfy 0 < radius_min <= radius_max")
        if not self.kappa > 0 or not self.sigma > 0:
            raise InvalidInputError("kappa and sigma must be positive")

    @property
    def dim(self) -> int:
        return 2

    @property
    def radii(self) -> np.ndarray:
        return np.linspace(self.radius_min, self.radius_max, int(self.n_rings))

    @property
    def centers(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(1, int(self.n_modes) + 1) / int(self.n_modes)

    def _angular_moments(self):
        # E[cos t], E[sin t], E[cos 2t], E[sin 2t] averaged over the modes;
        # the von Mises mean resultant of order p is I_p(kappa) / I_0(kappa).
        a1 = special.ive(1, self.kappa) / special.ive(0, self.kappa)
        a2 = special.ive(2, self.kappa) / special.ive(0, self.kappa)
        mu = self.centers
        return (a1 * np.cos(mu).mean(), a1 * np.sin(mu).mean(),
                a2 * np.cos(2 * mu).mean(), a2 * np.sin(2 * mu).mean())

    def population_mean(self) -> np.ndarray:
        c1, s1, _, _ = self._angular_moments()
        return self.radii.mean() * np.array([c1, s1])

    def population_cov(self) -> np.ndarray:
        _, _, c2, s2 = self._angular_moments()
        r2 = float(np.mean(self.radii**2)) + self.sigma**2
        second = 0.5 * r2 * np.array([[1.0 + c2, s2], [s2, 1.0 - c2]])
        mu = self.population_mean()
        return second - np.outer(mu, mu)


@dataclass(frozen=True)
class Scalar1D:
    """One-dimensional law: ``uniform`` on ``[low, high]`` or ``normal(low, high^2)``.

    For ``normal`` the two parameters are the mean and standard deviation.
    """

    law: str = "uniform"
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.law not in ("uniform", "normal"):
            raise InvalidInputError(f"unknown scalar law {self.law!r}")
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise InvalidInputError("scalar law parameters must be finite")
        if self.law == "uniform" and not self.low <= self.high:
            raise InvalidInputError("uniform law needs low <= high")
        if self.law == "normal" and self.high < 0:
            raise InvalidInputError("normal law needs a nonnegative standard deviation")

    @property
    def dim(self) -> int:
        return 1

    def population_mean(self) -> np.ndarray:
        if self.law == "uniform":
            return np.array([0.5 * (self.low + self.high)])
        return np.array([float(self.low)])

    def population_cov(self) -> np.ndarray:
        if self.law == "uniform":
            return np.array([[(self.high - self.low) ** 2 / 12.0]])
        return np.array([[float(self.high) ** 2]])


DistributionSpec = Union[Gaussian, GaussianMixture, Ring, Scalar1D, "SdecSpec"]


def von_mises(mu, kappa: float, rng: np.random.Generator) -> np.ndarray:
    """Best-Fisher rejection sampler; one angle per entry of ``mu``."""
    mu = np.asarray(mu, dtype=np.float64)
    count = mu.size
    if kappa < 1e-8:
        return mu + rng.uniform(-np.pi, np.pi, size=count)
    tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
    rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
    r = (1.0 + rho * rho) / (2.0 * rho)
    out = np.empty(count)
    todo = np.arange(count)
    while todo.size:
        u1, u2, u3 = rng.random((3, todo.size))
        z = np.cos(np.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        sign = np.where(u3 > 0.5, 1.0, -1.0)
        out[todo[ok]] = sign[ok] * np.arccos(np.clip(f[ok], -1.0, 1.0))
        todo = todo[~ok]
    return mu.reshape(-1) + out


def _count(count):
    if isinstance(count, bool) or int(count) != count or count < 1:
        raise InvalidInputError(f"sample count must be a positive integer, got {count!r}")
    return int(count)


def sample(spec: DistributionSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. samples as a ``(count, dim)`` array."""
    count = _count(count)
    if isinstance(spec, Gaussian):
        e = rng.standard_normal((count, spec.dim))
        return spec.mean + e @ spec.root.T
    if isinstance(spec, GaussianMixture):
        comp = rng.choice(spec.weights.size, size=count, p=spec.weights)
        e = rng.standard_normal((count, spec.dim))
        return spec.means[comp] + np.einsum("nij,nj->ni", spec.roots[comp], e)
    if isinstance(spec, Ring):
        ring = rng.integers(0, int(spec.n_rings), size=count)
        mode = rng.integers(0, int(spec.n_modes), size=count)
        theta = von_mises(spec.centers[mode], spec.kappa, rng)
        rho = spec.radii[ring] + spec.sigma * rng.standard_normal(count)
        return np.column_stack([rho * np.cos(theta), rho * np.sin(theta)])
    if isinstance(spec, Scalar1D):
        if spec.law == "uniform":
            return rng.uniform(spec.low, spec.high, size=(count, 1))
        return spec.low + spec.high * rng.standard_normal((count, 1))
    if isinstance(spec, SdecSpec):
        return sample_sdec_z(spec, count, rng)
    raise InvalidInputError(f"unsupported distribution spec {type(spec).__name__}")


def sample_random_mixture_params(
    rng: np.random.Generator,
    components: int = 6,
    dim: int = 2,
    mean_sd: float = 6.0,
    scale_range=(0.2, 1.5),
    ridge: float = 1e-6,
) -> GaussianMixture:
    """Random mixture: Dirichlet(1) weights, ``N(0, mean_sd^2)`` means and
    covariances ``F diag(s) F^T + ridge I`` with standard-normal ``F`` and
    ``s_i ~ Unif(scale_range)``.

    Dirichlet weights are normalised unit-rate Gamma draws.
    """
    g = rng.standard_gamma(1.0, size=components)
    weights = g / g.sum()
    means = rng.normal(0.0, mean_sd, size=(components, dim))
    covs = np.empty((components, dim, dim))
    for k in range(components):
        F = rng.standard_normal((dim, dim))
        s = rng.uniform(scale_range[0], scale_range[1], size=dim)
        covs[k] = (F * s) @ F.T + ridge * np.eye(dim)
    return GaussianMixture(weights, means, covs)


@dataclass(frozen=True)
class JointModel:
    """Joint law of ``(Z + M Y, Y)`` with ``Z ~ z_spec`` independent of ``Y ~ y_spec``."""

    z_spec: DistributionSpec
    y_spec: DistributionSpec
    M: np.ndarray

    def __post_init__(self):
        M = linalg.as_matrix(np.atleast_2d(self.M), "M")
        if M.shape != (self.z_spec.dim, self.y_spec.dim):
            raise InvalidInputError(
                f"M has shape {M.shape}, expected ({self.z_spec.dim}, {self.y_spec.dim})")
        M.setflags(write=False)
        object.__setattr__(self, "M", M)

    @property
    def n(self) -> int:
        return self.z_spec.dim

    @property
    def m(self) -> int:
        return self.y_spec.dim

    def population_moments(self) -> Moments:
        """Analytic moments: ``S_xy = M S_y``, ``S_x = S_z + M S_y M^T``."""
        mz, my = self.z_spec.population_mean(), self.y_spec.population_mean()
        cz, cy = self.z_spec.population_cov(), self.y_spec.population_cov()
        M = self.M
        return moments_from_blocks(mz + M @ my, my, cz + M @ cy @ M.T, cy, M @ cy)


def sample_joint(model: JointModel, count: int, rng_z: np.random.Generator,
                 rng_y: Optional[np.random.Generator] = None) -> Ensemble:
    """Particles ``(z_i + M y_i, y_i)``; the ``z_i`` are kept on the ensemble.

    ``Z`` and ``Y`` are drawn from separate streams when ``rng_y`` is given,
    otherwise both come from ``rng_z`` in that order.
    """
    z = sample(model.z_spec, count, rng_z)
    y = sample(model.y_spec, count, rng_z if rng_y is None else rng_y)
    return Ensemble(z + y @ model.M.T, y, z)


def sample_posterior(model: JointModel, y_star, count: int, rng: np.random.Generator) -> np.ndarray:
    """Exact posterior draws ``z_i + M y_star``."""
    ys = _vector(y_star, "y_star")
    if ys.size != model.m:
        raise InvalidInputError(f"y_star has length {ys.size}, expected {model.m}")
    return sample(model.z_spec, count, rng) + model.M @ ys


@dataclass(frozen=True)
class SdecSpec:
    """Scalar law ``U = b + sum_k lam^k w^T (Y_k - E Y)`` with i.i.d. ``Y_k ~ y_spec``.

    Such a ``U`` satisfies ``U = lam U' + (b (1 - lam) + w^T (Y - E Y))`` in
    distribution. The series is cut after ``truncation`` terms, by default
    the smallest count with ``|lam|^K < 1e-12``.
    """

    lam: float
    w: np.ndarray
    b: float
    y_spec: DistributionSpec
    truncation: Optional[int] = None

    def __post_init__(self):
        lam = float(self.lam)
        if not abs(lam) < 1:
            raise InvalidInputError(f"|lambda| must be below 1, got {lam}")
        w = _vector(self.w, "w")
        if w.size != self.y_spec.dim:
            raise InvalidInputError(f"w has length {w.size}, expected {self.y_spec.dim}")
        K = self.truncation
        if K is None:
            K = 1 if lam == 0 else max(1, math.ceil(math.log(SDEC_TOLERANCE) / math.log(abs(lam))))
        if int(K) < 1:
            raise InvalidInputError("truncation must be at least 1")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "truncation", int(K))

    @property
    def dim(self) -> int:
        return 1

    def population_mean(self) -> np.ndarray:
        return np.array([self.b])

    def population_cov(self) -> np.ndarray:
        # exact for the truncated series
        var = float(self.w @ self.y_spec.population_cov() @ self.w)
        terms = self.truncation if self.lam != 0 else 1
        return np.array([[var * (1.0 - self.lam ** (2 * terms)) / (1.0 - self.lam**2)]])


def sample_sdec_z(spec: SdecSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` values of the truncated series as a ``(count, 1)`` array."""
    count = _count(count)
    ey = spec.y_spec.population_mean()
    total = np.zeros(count)
    coef = 1.0
    for _ in range(spec.truncation):
        if coef == 0.0:
            break
        total += coef * ((sample(spec.y_spec, count, rng) - ey) @ spec.w)
        coef *= spec.lam
    return (spec.b + total)[:, None]


def sample_product_model(r_spec: Scalar1D, f: Callable, count: int,
                         rng: np.random.Generator,
                         rng_y: Optional[np.random.Generator] = None) -> Ensemble:
    """Particles ``(f(y_i) z_i, y_i)`` with ``z_i, y_i`` i.i.d. from ``r_spec``."""
    if r_spec.dim != 1:
        raise InvalidInputError("product model needs a one-dimensional law")
    z = sample(r_spec, count, rng)
    y = sample(r_spec, count, rng if rng_y is None else rng_y)
    fy = np.asarray(f(y[:, 0]), dtype=np.float64).reshape(-1)
    if fy.shape != (y.shape[0],):
        fy = np.broadcast_to(fy, (y.shape[0],)).copy()
    return Ensemble(fy[:, None] * z, y, z)
