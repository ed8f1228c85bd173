"""Compiled vs numpy kernels on the table sizes the experiments use.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json]

Each kernel runs on identical inputs in both backends; the maximum
relative difference is printed next to the timings.
"""

import argparse
import json
import timeit

import numpy as np

from fwdwick import _kernels_py as py
from fwdwick.noise_grid import make_graded_grid, required_left_cut

try:
    from fwdwick import _ckernels as cy
except ImportError:
    cy = None


def cases(spacing):
    H = 0.7
    grid = make_graded_grid(spacing, 1.25, required_left_cut(H, "rosenblatt", 1e-4))
    b = grid.boundaries
    s = np.linspace(0.0, 1.0, 4 * int(round(1 / spacing)))
    t = np.linspace(0.0, 1.0, int(round(0.5 / spacing)) + 1)
    x = np.random.default_rng(0).normal(size=200_000)
    return grid.cell_count, [
        ("power_avg", lambda m: m.power_avg(H / 2 - 1, b, s)),
        ("power_incr_avg", lambda m: m.power_incr_avg(H - 0.5, b, t[:-1], t[1:])),
        ("hermite_table", lambda m: m.hermite_table(8, 0.7, x)),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()
    rows = []
    for spacing in (1 / 160, 1 / 640):
        G, cs = cases(spacing)
        for name, fn in cs:
            t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat))
            row = {"kernel": name, "cells": G, "spacing": spacing, "numpy_s": t_py}
            if cy is not None:
                t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat))
                a, c = fn(py), fn(cy)
                rel = float(np.max(np.abs(a - c)) / max(np.max(np.abs(a)), 1e-300))
                row.update(compiled_s=t_cy, speedup=t_py / t_cy, max_rel_diff=rel)
            rows.append(row)
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"{'kernel':16s} {'cells':>6s} {'numpy [s]':>10s} {'compiled [s]':>13s} {'speedup':>8s} {'max rel diff':>13s}")
    for r in rows:
        print(f"{r['kernel']:16s} {r['cells']:6d} {r['numpy_s']:10.4f} {r.get('compiled_s', float('nan')):13.4f} "
              f"{r.get('speedup', float('nan')):8.1f} {r.get('max_rel_diff', float('nan')):13.2e}")


if __name__ == "__main__":
    main()
