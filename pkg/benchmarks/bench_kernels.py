"""Benchmark the compiled scan kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--steps N] [--dim N] [--repeat N]
"""

import argparse
import time

import numpy as np

from fiberopt import HAVE_COMPILED_KERNELS
from fiberopt import _kernels_py


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=4000)
    parser.add_argument("--dim", type=int, default=512)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    g = np.ascontiguousarray(rng.normal(size=(args.steps, args.dim)))
    variants = [("python", _kernels_py)]
    if HAVE_COMPILED_KERNELS:
        from fiberopt import _kernels
        variants.append(("compiled", _kernels))
    else:
        print("compiled kernels unavailable; timing the fallback only")

    print(f"scan of ({args.steps}, {args.dim}) blocks, best of {args.repeat}")
    results = {}
    for kernel in ("innovation_scan", "ema_scan"):
        for name, mod in variants:
            fn = getattr(mod, kernel)
            if kernel == "innovation_scan":
                call = lambda: fn(g, 0.9, np.zeros(args.dim), np.zeros(args.dim))
            else:
                call = lambda: fn(g, 0.6, np.zeros(args.dim))
            results[(kernel, name)] = _time(call, args.repeat)
            print(f"  {kernel:16s} {name:9s} {results[(kernel, name)]*1e3:9.3f} ms")
        if len(variants) == 2:
            ratio = results[(kernel, "python")] / results[(kernel, "compiled")]
            print(f"  {kernel:16s} speedup   {ratio:9.2f}x")


if __name__ == "__main__":
    main()
