"""Command-line interface: ``enku <command> [options]``.

Exit codes: 0 on success, 2 for invalid input or malformed files, 3 when a
solver or experiment run fails.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import diagnostics, generators, harness, rng, updates
from .ensemble import Ensemble, moments, read_ensemble, read_points, write_ensemble, write_points
from .errors import EnkuError, InvalidInputError, ParseError
from .wasserstein import DEFAULT_BACKEND, available_backends, w2_exact

EXIT_INPUT = 2
EXIT_FAILURE = 3


def _vector_arg(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise InvalidInputError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise InvalidInputError("empty vector")
    return np.array(vals)


def _matrix_csv(path: str) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ParseError(f"{path}: cannot read matrix: {exc}") from exc
    except ValueError as exc:
        raise ParseError(f"{path}: malformed matrix: {exc}") from exc


def _read_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc


def _print_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def cmd_update(args) -> int:
    ys = _vector_arg(args.y_star)
    if args.method == "eakf-svd":
        if args.H is None or args.Gamma is None:
            raise InvalidInputError("eakf-svd needs --H and --Gamma")
        try:
            x = read_ensemble(args.ensemble).x
        except ParseError:
            x = read_points(args.ensemble)
        out = updates.eakf_svd_update(x, _matrix_csv(args.H), _matrix_csv(args.Gamma), ys)
    else:
        e = read_ensemble(args.ensemble)
        build = {"enku": updates.enku_map, "ld": updates.ld_map, "lot": updates.lot_map}
        out = updates.apply_map(build[args.method](moments(e), ys), e)
    write_points(out.x, args.out)
    return 0


def cmd_sample(args) -> int:
    spec = _read_json(args.spec)
    seed = rng.check_seed(args.seed)
    if not isinstance(spec, dict):
        raise InvalidInputError("spec must be a JSON object")
    if "kind" in spec:
        model = harness.build_model(spec, seed)
        rz = rng.stream(seed, rng.ROLE_Z, 0, args.n)
        ry = rng.stream(seed, rng.ROLE_Y, 0, args.n)
        if isinstance(model, harness.ProductModel):
            e = generators.sample_product_model(model.r_spec, model.f, args.n, rz, ry)
        else:
            e = generators.sample_joint(model, args.n, rz, ry)
        write_ensemble(e, args.out, include_z=args.with_z)
    else:
        dist = harness.build_distribution(spec, rng.stream(seed, rng.ROLE_SPEC, 0, 0))
        write_points(generators.sample(dist, args.n, rng.stream(seed, rng.ROLE_Z, 0, args.n)),
                     args.out)
    return 0


def cmd_w2(args) -> int:
    res = w2_exact(read_points(args.a), read_points(args.b), backend=args.backend)
    _print_json({"distance": res.distance, "squared_cost": res.squared_cost})
    return 0


def cmd_diagnose(args) -> int:
    samples = read_points(args.samples)
    pair = read_points(args.pair) if args.pair else None
    orders = args.cyclic_order or [2, 3, 4, 6]
    report = diagnostics.symmetry_report(samples, orders=orders, pair=pair,
                                         centered=not args.uncentered)
    _print_json(report.to_dict())
    return 0


def cmd_run(args) -> int:
    cfg = harness.load_config(args.config)

    def progress(done, total):
        if not args.quiet:
            sys.stderr.write(f"\r{done}/{total} units")
            if done == total:
                sys.stderr.write("\n")

    result = harness.run_experiment(cfg, workers=args.workers, progress=progress)
    paths = harness.emit(result, args.out_dir)
    info = {"wall_time_s": result.wall_time, "workers": args.workers or harness.default_workers(),
            "w2_backend": DEFAULT_BACKEND}
    with open(os.path.join(args.out_dir, "run_info.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(info, indent=2) + "\n")
    if not args.quiet:
        for m in cfg.methods:
            for n, s in sorted(result.stats[m].items()):
                mean = "nan" if s.mean is None else f"{s.mean:.6g}"
                err = "nan" if s.stderr is None else f"{s.stderr:.2g}"
                print(f"{m:>9} N={n:<7} w2={mean} +/- {err}")
        print(f"wrote {paths['json']}")
    return 0


def cmd_preset(args) -> int:
    text = json.dumps(harness.preset_dict(args.name), indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="enku", description="Affine ensemble updates and exact W2 scoring.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("update", help="apply an update map to an ensemble CSV")
    s.add_argument("--method", choices=["enku", "ld", "lot", "eakf-svd"], required=True)
    s.add_argument("--ensemble", required=True)
    s.add_argument("--y-star", required=True, help="comma-separated observation")
    s.add_argument("--H", help="observation operator CSV (eakf-svd)")
    s.add_argument("--Gamma", help="noise covariance CSV (eakf-svd)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_update)

    s = sub.add_parser("sample", help="draw samples from a distribution or joint model JSON")
    s.add_argument("--spec", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--with-z", action="store_true", help="also write the latent z columns")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("w2", help="exact W2 distance between two point-cloud CSVs")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--backend", choices=available_backends(), default=None)
    s.set_defaults(func=cmd_w2)

    s = sub.add_parser("diagnose", help="symmetry report for a sample CSV")
    s.add_argument("--samples", required=True)
    s.add_argument("--cyclic-order", type=int, action="append")
    s.add_argument("--pair", help="second cloud for the translation residual")
    s.add_argument("--uncentered", action="store_true")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("run", help="run a convergence study from a config JSON")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default: ${harness.WORKERS_ENV} or 1)")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("preset", help="print or save a shipped experiment config")
    s.add_argument("--name", choices=list(harness.PRESETS), required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_preset)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInputError, ParseError) as exc:
        sys.stderr.write(f"enku: error: {exc}\n")
        return EXIT_INPUT
    except (EnkuError, OSError) as exc:
        sys.stderr.write(f"enku: error: {exc}\n")
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
