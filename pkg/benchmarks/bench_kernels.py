#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Runs the two hot kernels on a synthetic-benchmark-sized workload and prints
per-call timings plus the speedup. Also verifies that both backends return
bit-identical results on the benchmark inputs (they must; the correlation
scores are integer sums and the rasterization decisions share one float
expression).

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from labelalign._kernels import available_backends, get_backend


def time_call(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5, help="timing repetitions (default 5)")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")

    # rasterization workload: a 40x32 L-shape on a 512x512 grid
    xs = np.ascontiguousarray([100.0, 140.0, 140.0, 120.0, 120.0, 100.0])
    ys = np.ascontiguousarray([100.0, 100.0, 116.0, 116.0, 132.0, 132.0])
    fill_args = (xs, ys, 512, 512)

    # correlation workload: ~1300-pixel stencil, 65x65 search window
    channel = (rng.random((512, 512)) * 255).astype(np.uint8)
    rows, cols = np.nonzero(get_backend("pure").fill_mask(*fill_args))
    corr_args = (channel, rows.astype(np.int64), cols.astype(np.int64), 32)

    results = {}
    for name in backends:
        backend = get_backend(name)
        results[name] = {
            "fill_mask": time_call(backend.fill_mask, fill_args, args.repeat),
            "window_scores": time_call(backend.window_scores, corr_args, args.repeat),
            "outputs": (backend.fill_mask(*fill_args), backend.window_scores(*corr_args)),
        }

    print(f"{'kernel':<16} " + " ".join(f"{n:>12}" for n in backends) +
          ("      speedup" if len(backends) == 2 else ""))
    for kernel in ("fill_mask", "window_scores"):
        row = f"{kernel:<16} "
        times = [results[n][kernel] for n in backends]
        row += " ".join(f"{t * 1e3:9.3f} ms" for t in times)
        if len(times) == 2:
            row += f"   {times[0] / times[1]:9.1f}x"
        print(row)

    if len(backends) == 2:
        a, b = (results[n]["outputs"] for n in backends)
        same = np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        print(f"bit-identical outputs: {same}")
        if not same:
            raise SystemExit("backend outputs diverged")


if __name__ == "__main__":
    main()
