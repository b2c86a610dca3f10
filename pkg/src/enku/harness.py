"""Monte Carlo convergence study for the affine update maps.

For every replicate ``r`` and ensemble size ``N`` the runner draws a joint
ensemble, builds each requested map at ``y_star``, pushes the ensemble
through it and scores the result against ``posterior_multiplier * N``
exact posterior draws with the exact W2 distance. Each ``(r, N)`` unit
uses its own random streams, so results do not depend on the number of
worker processes or the order in which units finish.

Configs are plain JSON; see :func:`build_model` for the model schema.
"""

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import generators, rng
from .ensemble import Ensemble, moments
from .errors import EnkuError, ExperimentError, InvalidInputError
from .generators import JointModel, Scalar1D, SdecSpec
from .updates import AffineConditioningMap, apply_map, enku_map, ld_map, lot_map
from .wasserstein import w2_exact

METHODS = ("enku", "enku-pop", "ld", "lot", "sdec-alt", "obsdep")
DEFAULT_N_GRID = (64, 128, 256, 512, 1024, 2048, 4096)
DEFAULT_REPLICATES = 30
DEFAULT_POSTERIOR_MULTIPLIER = 6
MAX_FAILURE_FRACTION = 0.10
WORKERS_ENV = "ENKU_WORKERS"

# Named gain functions for the product model ``(f(y) z, y)``.
PRODUCT_FUNCTIONS: Dict[str, Callable] = {
    "zero": lambda y: np.zeros_like(y),
    "one": lambda y: np.ones_like(y),
    "one_plus_square": lambda y: 1.0 + y * y,
}

# Spec-stream slots for randomly drawn laws.
_SPEC_SLOTS = {"z": 0, "y": 1, "r": 2}


# ---------------------------------------------------------------------------
# Models


@dataclass(frozen=True)
class ProductModel:
    """``(f(y) z, y)`` with ``z, y`` i.i.d. from a scalar law."""

    r_spec: Scalar1D
    f_name: str

    def __post_init__(self):
        if self.f_name not in PRODUCT_FUNCTIONS:
            raise InvalidInputError(
                f"unknown product function {self.f_name!r}; known: {sorted(PRODUCT_FUNCTIONS)}")

    @property
    def f(self) -> Callable:
        return PRODUCT_FUNCTIONS[self.f_name]

    @property
    def n(self) -> int:
        return 1

    @property
    def m(self) -> int:
        return 1


def _require(d, key, where):
    if key not in d:
        raise InvalidInputError(f"{where}: missing field {key!r}")
    return d[key]


def build_distribution(d: dict, spec_rng: Optional[np.random.Generator] = None):
    """Distribution spec from its JSON form.

    ``type`` is one of ``gaussian``, ``mixture``, ``random_mixture``,
    ``ring``, ``scalar`` or ``sdec``. ``random_mixture`` draws its
    parameters from ``spec_rng``.
    """
    if not isinstance(d, dict):
        raise InvalidInputError(f"distribution must be a JSON object, got {type(d).__name__}")
    kind = _require(d, "type", "distribution")
    if kind == "gaussian":
        return generators.Gaussian(_require(d, "mean", kind), _require(d, "cov", kind))
    if kind == "mixture":
        return generators.GaussianMixture(
            _require(d, "weights", kind), _require(d, "means", kind), _require(d, "covs", kind))
    if kind == "random_mixture":
        if spec_rng is None:
            raise InvalidInputError("random_mixture needs a spec stream")
        return generators.sample_random_mixture_params(
            spec_rng,
            components=int(d.get("components", 6)),
            dim=int(d.get("dim", 2)),
            mean_sd=float(d.get("mean_sd", 6.0)),
            scale_range=(float(d.get("scale_low", 0.2)), float(d.get("scale_high", 1.5))),
            ridge=float(d.get("ridge", 1e-6)),
        )
    if kind == "ring":
        return generators.Ring(
            n_rings=int(d.get("n_rings", 3)), n_modes=int(d.get("n_modes", 6)),
            radius_min=float(d.get("radius_min", 1.4)), radius_max=float(d.get("radius_max", 4.0)),
            kappa=float(d.get("kappa", 25.0)), sigma=float(d.get("sigma", 0.2)))
    if kind == "scalar":
        return Scalar1D(str(d.get("law", "uniform")), float(d.get("low", 0.0)),
                        float(d.get("high", 1.0)))
    if kind == "sdec":
        y_spec = build_distribution(_require(d, "y", kind), spec_rng)
        return SdecSpec(float(_require(d, "lam", kind)), _require(d, "w", kind),
                        float(d.get("b", 0.0)), y_spec, d.get("truncation"))
    raise InvalidInputError(f"unknown distribution type {kind!r}")


def build_model(d: dict, spec_seed: int, replicate: int = 0):
    """Model from its JSON form.

    ``{"kind": "joint", "z": dist, "y": dist, "M": matrix}`` gives a
    :class:`~enku.generators.JointModel`; ``{"kind": "product", "r": dist,
    "f": name}`` gives a :class:`ProductModel`.
    """
    if not isinstance(d, dict):
        raise InvalidInputError("model must be a JSON object")
    kind = d.get("kind", "joint")

    def part(key):
        spec_rng = rng.stream(spec_seed, rng.ROLE_SPEC, replicate, _SPEC_SLOTS[key])
        return build_distribution(_require(d, key, f"{kind} model"), spec_rng)

    if kind == "joint":
        z_spec, y_spec = part("z"), part("y")
        M = d.get("M")
        if M is None:
            if z_spec.dim != y_spec.dim:
                raise InvalidInputError("M may only be omitted when Z and Y have equal dimension")
            M = np.eye(z_spec.dim)
        return JointModel(z_spec, y_spec, M)
    if kind == "product":
        r_spec = part("r")
        if not isinstance(r_spec, Scalar1D):
            raise InvalidInputError("product model needs a scalar law")
        return ProductModel(r_spec, str(_require(d, "f", kind)))
    raise InvalidInputError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """One convergence study.

    ``redraw_spec`` redraws random model parameters for every replicate
    instead of sharing one draw across the whole run.
    """

    name: str
    model: dict
    y_star: Tuple[float, ...]
    methods: Tuple[str, ...] = ("enku", "ld", "lot")
    n_grid: Tuple[int, ...] = DEFAULT_N_GRID
    replicates: int = DEFAULT_REPLICATES
    posterior_multiplier: int = DEFAULT_POSTERIOR_MULTIPLIER
    seed: int = 0
    spec_seed: int = 0
    redraw_spec: bool = False

    def __post_init__(self):
        object.__setattr__(self, "y_star", tuple(float(v) for v in np.atleast_1d(self.y_star)))
        object.__setattr__(self, "methods", tuple(str(m) for m in self.methods))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        for m in self.methods:
            if m not in METHODS:
                raise InvalidInputError(f"unknown method {m!r}; known: {list(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise InvalidInputError("methods must not repeat")
        if not self.n_grid or any(n < 2 for n in self.n_grid):
            raise InvalidInputError("n_grid must be non-empty with sizes of at least 2")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise InvalidInputError("n_grid must be strictly increasing")
        if int(self.replicates) < 1:
            raise InvalidInputError("replicates must be at least 1")
        if int(self.posterior_multiplier) < 1:
            raise InvalidInputError("posterior_multiplier must be at least 1")
        rng.check_seed(self.seed)
        rng.check_seed(self.spec_seed)
        if not all(math.isfinite(v) for v in self.y_star):
            raise InvalidInputError("y_star has non-finite entries")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": self.model,
            "y_star": list(self.y_star),
            "methods": list(self.methods),
            "n_grid": list(self.n_grid),
            "replicates": int(self.replicates),
            "posterior_multiplier": int(self.posterior_multiplier),
            "seed": int(self.seed),
            "spec_seed": int(self.spec_seed),
            "redraw_spec": bool(self.redraw_spec),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise InvalidInputError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvalidInputError(f"unknown config fields {sorted(extra)}")
        for key in ("name", "model", "y_star"):
            _require(d, key, "config")
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


PRESETS = ("exp1", "exp2", "exp3", "sdec", "obsdep")


def preset_dict(name: str) -> dict:
    """JSON form of a shipped preset."""
    if name not in PRESETS:
        raise InvalidInputError(f"unknown preset {name!r}; known: {list(PRESETS)}")
    text = resources.files("enku").joinpath("presets", f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_preset(name: str, **overrides) -> ExperimentConfig:
    """Shipped preset, optionally with some fields replaced."""
    d = preset_dict(name)
    d.update(overrides)
    return ExperimentConfig.from_dict(d)


def _check_methods(cfg: ExperimentConfig, model) -> None:
    for m in cfg.methods:
        if m == "obsdep" and not isinstance(model, ProductModel):
            raise InvalidInputError("method 'obsdep' needs a product model")
        if m == "sdec-alt" and not (isinstance(model, JointModel)
                                    and isinstance(model.z_spec, SdecSpec)):
            raise InvalidInputError("method 'sdec-alt' needs a joint model with an sdec Z law")
        if m == "enku-pop" and not isinstance(model, JointModel):
            raise InvalidInputError("method 'enku-pop' needs a joint model")
    if len(cfg.y_star) != model.m:
        raise InvalidInputError(f"y_star has length {len(cfg.y_star)}, model expects {model.m}")


# ---------------------------------------------------------------------------
# Maps specific to the structured models


def sdec_alt_map(spec: SdecSpec, M, y_star) -> AffineConditioningMap:
    """Exact map with ``A = lam`` for ``X = U + M Y`` where ``U ~ spec``.

    With ``B = w^T - lam M`` the output is ``lam U + w^T Y + c``, which has
    the law of ``U + M y_star`` once
    ``c = b (1 - lam) - w^T E[Y] + M y_star``.
    """
    if not abs(spec.lam) < 1:
        raise InvalidInputError(f"|lambda| must be below 1, got {spec.lam}")
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    ys = np.atleast_1d(np.asarray(y_star, dtype=np.float64))
    if M.shape != (1, spec.w.size) or ys.shape != (spec.w.size,):
        raise InvalidInputError("M and y_star must match the dimension of w")
    ey = spec.y_spec.population_mean()
    A = np.array([[spec.lam]])
    B = spec.w[None, :] - spec.lam * M
    c = np.array([spec.b * (1.0 - spec.lam) - float(spec.w @ ey) + float(M[0] @ ys)])
    return AffineConditioningMap(A, B, c)


def obsdep_map(f: Callable, y_star) -> AffineConditioningMap:
    """``(x, y) -> f(y_star) y`` for the scalar product model."""
    ys = np.atleast_1d(np.asarray(y_star, dtype=np.float64))
    if ys.shape != (1,):
        raise InvalidInputError("obsdep map is defined for scalar observations")
    scale = float(np.asarray(f(ys)).reshape(-1)[0])
    return AffineConditioningMap(np.zeros((1, 1)), np.array([[scale]]), np.zeros(1))


# ---------------------------------------------------------------------------
# Results


@dataclass
class MethodStats:
    mean: Optional[float]
    stderr: Optional[float]
    samples: List[Optional[float]]


@dataclass
class RunResult:
    """Per ``(method, N)`` statistics plus run metadata.

    ``stats[method][N].samples`` lists one value per replicate (``None``
    where that replicate failed). Wall-clock time is kept in
    ``wall_time`` and deliberately left out of :meth:`to_dict`, so the JSON
    of a rerun is byte-identical.
    """

    config: ExperimentConfig
    stats: Dict[str, Dict[int, MethodStats]]
    failures: List[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    wall_time: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "results": [
                {"method": m, "N": n, "w2_mean": s.mean, "w2_stderr": s.stderr,
                 "w2_samples": list(s.samples)}
                for m in self.config.methods for n, s in sorted(self.stats[m].items())
            ],
            "failures": self.failures,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        cfg = ExperimentConfig.from_dict(d["config"])
        stats: Dict[str, Dict[int, MethodStats]] = {m: {} for m in cfg.methods}
        for row in d["results"]:
            stats[row["method"]][int(row["N"])] = MethodStats(
                row["w2_mean"], row["w2_stderr"], list(row["w2_samples"]))
        return cls(cfg, stats, list(d.get("failures", [])), dict(d.get("metadata", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def mean(self, method: str, n: int) -> float:
        v = self.stats[method][n].mean
        if v is None:
            raise ExperimentError(f"no successful replicates for {method} at N={n}")
        return v


def _summarise(values: List[Optional[float]]) -> MethodStats:
    ok = np.array([v for v in values if v is not None], dtype=np.float64)
    if ok.size == 0:
        return MethodStats(None, None, list(values))
    mean = math.fsum(ok.tolist()) / ok.size
    stderr = float(np.std(ok, ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else None
    return MethodStats(mean, stderr, list(values))


# ---------------------------------------------------------------------------
# Running

_MODEL_CACHE: Dict[tuple, object] = {}


def _model_for(cfg: ExperimentConfig, replicate: int):
    key = (cfg.config_hash(), replicate if cfg.redraw_spec else 0)
    if key not in _MODEL_CACHE:
        _MODEL_CACHE.clear()
        _MODEL_CACHE[key] = build_model(cfg.model, cfg.spec_seed, key[1])
    return _MODEL_CACHE[key]


def _draw(model, n, replicate, seed):
    rz = rng.stream(seed, rng.ROLE_Z, replicate, n)
    ry = rng.stream(seed, rng.ROLE_Y, replicate, n)
    if isinstance(model, ProductModel):
        return generators.sample_product_model(model.r_spec, model.f, n, rz, ry)
    return generators.sample_joint(model, n, rz, ry)


def _reference(model, y_star, count, replicate, n, seed):
    rp = rng.stream(seed, rng.ROLE_POSTERIOR, replicate, n)
    if isinstance(model, ProductModel):
        scale = float(np.asarray(model.f(np.asarray(y_star))).reshape(-1)[0])
        return scale * generators.sample(model.r_spec, count, rp)
    return generators.sample_posterior(model, y_star, count, rp)


def _build_map(method, model, ens: Ensemble, y_star):
    if method == "enku":
        return enku_map(moments(ens), y_star)
    if method == "ld":
        return ld_map(moments(ens), y_star)
    if method == "lot":
        return lot_map(moments(ens), y_star)
    if method == "enku-pop":
        return enku_map(model.population_moments(), y_star)
    if method == "sdec-alt":
        return sdec_alt_map(model.z_spec, model.M, y_star)
    if method == "obsdep":
        return obsdep_map(model.f, y_star)
    raise InvalidInputError(f"unknown method {method!r}")


def _run_unit(cfg_dict: dict, replicate: int, n: int):
    """All methods for one ``(replicate, N)``; returns values and failures."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    y_star = np.array(cfg.y_star)
    values: Dict[str, Optional[float]] = {}
    failures = []
    try:
        model = _model_for(cfg, replicate)
        ens = _draw(model, n, replicate, cfg.seed)
        ref = _reference(model, y_star, cfg.posterior_multiplier * n, replicate, n, cfg.seed)
    except (EnkuError, np.linalg.LinAlgError) as exc:
        for m in cfg.methods:
            values[m] = None
            failures.append({"method": m, "N": n, "replicate": replicate, "error": str(exc)})
        return replicate, n, values, failures
    for m in cfg.methods:
        try:
            cmap = _build_map(m, model, ens, y_star)
            values[m] = w2_exact(apply_map(cmap, ens).x, ref).distance
        except (EnkuError, np.linalg.LinAlgError) as exc:
            values[m] = None
            failures.append({"method": m, "N": n, "replicate": replicate, "error": str(exc)})
    return replicate, n, values, failures


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        k = int(raw)
    except ValueError:
        raise InvalidInputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if k < 1:
        raise InvalidInputError(f"{WORKERS_ENV} must be at least 1, got {k}")
    return k


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None,
                   progress: Optional[Callable[[int, int], None]] = None) -> RunResult:
    """Run the study; bit-identical output for any ``workers``.

    Raises
    ------
    ExperimentError
        If more than 10% of the ``(method, N, replicate)`` evaluations fail.
    """
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise InvalidInputError(f"workers must be at least 1, got {workers}")
    # Validate the model and method choice once before spending any time.
    _check_methods(cfg, _model_for(cfg, 0))
    units = [(r, n) for n in cfg.n_grid for r in range(cfg.replicates)]
    cfg_dict = cfg.to_dict()
    start = time.perf_counter()
    out = []
    if workers == 1:
        for i, (r, n) in enumerate(units):
            out.append(_run_unit(cfg_dict, r, n))
            if progress:
                progress(i + 1, len(units))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_unit, cfg_dict, r, n) for r, n in units]
            for i, fut in enumerate(futures):
                out.append(fut.result())
                if progress:
                    progress(i + 1, len(units))
    wall = time.perf_counter() - start

    table = {(r, n): vals for r, n, vals, _ in out}
    failures = sorted((f for *_, fs in out for f in fs),
                      key=lambda f: (cfg.methods.index(f["method"]), f["N"], f["replicate"]))
    stats = {
        m: {n: _summarise([table[(r, n)][m] for r in range(cfg.replicates)]) for n in cfg.n_grid}
        for m in cfg.methods
    }
    metadata = {
        "config_hash": cfg.config_hash(),
        "seed": int(cfg.seed),
        "spec_seed": int(cfg.spec_seed),
        "streams": {
            "ensemble_z": rng.stream_id(rng.ROLE_Z, 0, 0).split("/")[0] + "/{replicate}/{N}",
            "ensemble_y": rng.stream_id(rng.ROLE_Y, 0, 0).split("/")[0] + "/{replicate}/{N}",
            "posterior": rng.stream_id(rng.ROLE_POSTERIOR, 0, 0).split("/")[0] + "/{replicate}/{N}",
            "spec": rng.stream_id(rng.ROLE_SPEC, 0, 0).split("/")[0]
            + ("/{replicate}/{slot}" if cfg.redraw_spec else "/0/{slot}"),
        },
        "evaluations": len(units) * len(cfg.methods),
        "failed": len(failures),
    }
    result = RunResult(cfg, stats, failures, metadata, wall)
    total = len(units) * len(cfg.methods)
    if total and len(failures) > MAX_FAILURE_FRACTION * total:
        raise ExperimentError(
            f"{len(failures)} of {total} evaluations failed (limit "
            f"{MAX_FAILURE_FRACTION:.0%}); first error: {failures[0]['error']}")
    return result


def fit_convergence(result: RunResult, method: str) -> Tuple[float, float]:
    """Log-log slope over the first half of the grid and the mean of the
    last two grid means."""
    grid = sorted(result.stats[method])
    if len(grid) < 3:
        raise InvalidInputError("convergence fit needs at least 3 grid points")
    means = [result.stats[method][n].mean for n in grid]
    if any(v is None for v in means):
        raise ExperimentError(f"{method} has grid points without successful replicates")
    head = (len(grid) + 1) // 2
    xs = np.log(np.array(grid[:head], dtype=np.float64))
    vals = np.array(means[:head], dtype=np.float64)
    if np.any(vals <= 0):
        raise ExperimentError(f"slope undefined: {method} has a zero mean W2 in the fitted range")
    slope = float(np.polyfit(xs, np.log(vals), 1)[0])
    floor = 0.5 * (means[-1] + means[-2])
    return slope, floor


# ---------------------------------------------------------------------------
# Output


def emit(result: RunResult, out_dir) -> Dict[str, str]:
    """Write ``results.json``, ``w2_long.csv`` and ``w2_summary.csv``."""
    paths = {
        "json": os.path.join(out_dir, "results.json"),
        "long": os.path.join(out_dir, "w2_long.csv"),
        "summary": os.path.join(out_dir, "w2_summary.csv"),
    }
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(paths["json"], "w", encoding="utf-8") as fh:
            fh.write(result.to_json())
        with open(paths["long"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "N", "replicate", "w2"])
            for m in result.config.methods:
                for n, s in sorted(result.stats[m].items()):
                    for r, v in enumerate(s.samples):
                        w.writerow([m, n, r, "" if v is None else repr(v)])
        with open(paths["summary"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "N", "mean", "stderr"])
            for m in result.config.methods:
                for n, s in sorted(result.stats[m].items()):
                    w.writerow([m, n, "" if s.mean is None else repr(s.mean),
                                "" if s.stderr is None else repr(s.stderr)])
    except OSError as exc:
        raise OSError(f"cannot write results to {out_dir}: {exc}") from exc
    return paths
