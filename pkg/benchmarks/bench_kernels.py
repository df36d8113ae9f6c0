"""Compare the compiled and pure-numpy scan kernels on identical inputs.

Run with ``python benchmarks/bench_kernels.py [--n 1000] [--repeat 5]``.
"""
import argparse
import math
import timeit

import numpy as np

from crisp import _pykernels
from crisp.geometry import sample_uniform_sphere

try:
    from crisp import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def make_inputs(n, d, seed):
    rng = np.random.default_rng(seed)
    pts = sample_uniform_sphere(rng, d, n)
    centre = np.ones(d) / math.sqrt(d)
    vals = 2.0 * (pts @ centre >= 0.75) + rng.standard_normal(n)
    dirs = sample_uniform_sphere(rng, d, 200)
    proj = dirs @ pts.T
    order = np.argsort(-proj, axis=1, kind="stable")
    return {
        "batch": (np.take_along_axis(proj, order, axis=1), vals[order], -1.0, 1.0, 0),
        "scan": (pts, vals, centre, math.cos(1.2), 0),
        "climb": (pts, vals, centre, 0.7, rng.standard_normal((100, d)),
                  np.abs(rng.standard_normal(100)), 0.3, 0.97, None, math.inf, math.pi, 0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    inputs = make_inputs(args.n, args.d, 0)
    kernels = {"best_prefix_batch": "batch", "scan_center": "scan", "hill_climb": "climb"}
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"n={args.n} d={args.d} best of {args.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{name:>12}" for name, _ in backends) + f"{'speedup':>10}")
    for fn, key in kernels.items():
        times = []
        for _, mod in backends:
            f = getattr(mod, fn)
            times.append(min(timeit.repeat(lambda: f(*inputs[key]), number=1, repeat=args.repeat)))
        row = f"{fn:<20}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
