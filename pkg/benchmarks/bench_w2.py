"""Time the exact W2 solver on the compiled and pure-Python flow kernels.

Usage::

    python benchmarks/bench_w2.py [--sizes 256 1024] [--ratio 6] [--repeats 1]

Each case scores a 2-D Gaussian-mixture cloud of ``N`` points against an
independent cloud of ``ratio * N`` points, the shape used by the experiment
harness. Both backends must return the same distance.
"""

import argparse
import time

import numpy as np

from enku.generators import sample, sample_random_mixture_params
from enku.wasserstein import available_backends, w2_exact


def clouds(n, ratio, seed):
    rng = np.random.default_rng(seed)
    spec = sample_random_mixture_params(rng)
    return sample(spec, n, rng), sample(spec, ratio * n, rng)


def best_time(a, b, backend, repeats):
    best, dist = np.inf, None
    for _ in range(repeats):
        t = time.perf_counter()
        dist = w2_exact(a, b, backend=backend).distance
        best = min(best, time.perf_counter() - t)
    return best, dist


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[256, 1024])
    p.add_argument("--ratio", type=int, default=6)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    backends = available_backends()
    print(f"{'N':>6} {'M':>7} " + " ".join(f"{b + ' [s]':>14}" for b in backends) + "  speedup")
    for n in args.sizes:
        a, b = clouds(n, args.ratio, args.seed + n)
        times, dists = {}, {}
        for be in backends:
            times[be], dists[be] = best_time(a, b, be, args.repeats)
        if len(set(dists.values())) != 1:
            raise SystemExit(f"backends disagree at N={n}: {dists}")
        speed = (f"{times['python'] / times['compiled']:7.1f}x"
                 if {"python", "compiled"} <= set(times) else "    n/a")
        print(f"{n:>6} {args.ratio * n:>7} " + " ".join(f"{times[be]:>14.3f}" for be in backends)
              + f"  {speed}")


if __name__ == "__main__":
    main()
