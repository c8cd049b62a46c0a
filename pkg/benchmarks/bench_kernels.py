#!/usr/bin/env python3
"""Time each hot kernel under every available backend.

    python benchmarks/bench_kernels.py [--repeat 5] [--out kernels.csv]

Prints one line per (kernel, backend) with the best wall time over
``--repeat`` runs and the speedup against the pure-Python fallback.
"""

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from mlscale import kernels
from mlscale.sparse import load_movielens

ROOT = Path(__file__).resolve().parent.parent


def _ratings():
    path = ROOT / "data" / "ml-100k" / "u.data"
    if path.exists():
        return load_movielens(path)
    from mlscale.synthetic import low_rank_instance
    return low_rank_instance(943, 1682, 8, observed=0.063, seed=0).observed


def cases():
    R = _ratings()
    r = 8
    rng = np.random.default_rng(0)
    B = rng.uniform(size=(R.n_cols, r))
    A = rng.uniform(size=(R.n_rows, r))
    out = np.zeros((R.n_rows, r))
    pts = rng.standard_normal((100_000, 10))
    cents = pts[:20].copy()
    words = [f"tok{i % 5000} w{i}" for i in range(200_000)]
    return {
        "ridge_half_sweep": lambda k: k.ridge_half_sweep(R.row_ptr, R.cols, R.values, B, 0.01,
                                                         True, 0, R.n_rows, out),
        "lowrank_entries": lambda k: k.lowrank_entries(R.rows, R.cols, A, B),
        "kmeans_partials": lambda k: k.kmeans_partials(pts, cents),
        "hash_grams": lambda k: k.hash_grams(words, 60000, True),
    }


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; timing the fallback only", file=sys.stderr)
    rows = []
    for name, fn in cases().items():
        base = None
        for b in backends:
            mod = kernels.get_backend(b)
            fn(mod)  # warm-up
            t = best_time(lambda: fn(mod), args.repeat)
            base = t if b == "python" else base
            rows.append((name, b, t, base / t))
            print(f"{name:18s} {b:7s} {t * 1e3:10.2f} ms   x{base / t:6.1f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kernel", "backend", "seconds", "speedup_vs_python"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
