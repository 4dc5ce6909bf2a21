"""Time the compiled DTW kernel against the pure-Python fallback.

The default workload is the one the DTW clustering baseline runs: all
channel pairs of a 7-channel series, last 1000 steps, band radius 50.

    python3 benchmarks/bench_dtw.py [--channels 7] [--steps 1000] [--radius 50] [--repeat 3]
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from dgcformer import _dtw_py

try:
    from dgcformer import _dtw_core
except ImportError:
    _dtw_core = None


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--channels", type=int, default=7)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--radius", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    series = np.cumsum(np.random.default_rng(args.seed).normal(size=(args.channels, args.steps)), axis=1)
    result = {"channels": args.channels, "steps": args.steps, "radius": args.radius,
              "pairs": args.channels * (args.channels - 1) // 2}
    py = _dtw_py.pairwise_dtw(series, args.radius)
    result["python_s"] = best_of(lambda: _dtw_py.pairwise_dtw(series, args.radius), args.repeat)
    if _dtw_core is None:
        result["cython_s"] = None
        result["note"] = "compiled core not built; reinstall with a C compiler and Cython available"
    else:
        cy = _dtw_core.pairwise_dtw(series, args.radius)
        result["max_abs_diff"] = float(np.abs(cy - py).max())
        result["cython_s"] = best_of(lambda: _dtw_core.pairwise_dtw(series, args.radius), args.repeat)
        result["speedup"] = result["python_s"] / result["cython_s"]
    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
