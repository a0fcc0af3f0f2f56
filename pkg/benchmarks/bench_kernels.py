"""Time the compiled and pure-numpy kernel backends on the same inputs.

    python3 benchmarks/bench_kernels.py --rows 20000 --cols 30 --repeat 3

Each kernel result is also compared across backends, so a speedup is only
reported for identical outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from wumkit import kernels
from wumkit.iforest import average_path_length
from wumkit.learn.trees import Encoded


def best_of(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def cases(rows: int, cols: int, depth: int, seed: int):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(rows, cols)), 2)
    y = (X[:, 0] + X[:, 1] * X[:, 2] > 0).astype(np.int64) + (X[:, 3] > 1)
    enc = Encoded(X)
    w = np.ones(rows)
    zeros = np.zeros(rows)
    resid = rng.normal(size=rows)

    def gini(b):
        return b.build_tree(enc.codes, enc.n_bins, enc.values, enc.offsets, y, 3, zeros, w,
                            kernels.GINI, depth, 2.0, 1.0, cols, 1)

    def mse(b):
        return b.build_tree(enc.codes, enc.n_bins, enc.values, enc.offsets, np.zeros(rows, np.int64),
                            1, resid, w, kernels.MSE, 3, 2.0, 1.0, cols, 2)

    ref_tree = gini(kernels.python_backend)

    def apply(b):
        return b.apply_tree(ref_tree[0], ref_tree[1], ref_tree[2], ref_tree[3], X)

    loads = np.ascontiguousarray(rng.lognormal(size=(rows, 1)))
    sub = loads[:256]

    def itree(b):
        return b.build_itree(sub, 8, 3)

    trees = [kernels.python_backend.build_itree(loads[rng.choice(rows, 256, replace=False)], 8, t)
             for t in range(100)]
    parts = [np.concatenate(p) for p in zip(*trees)]
    offsets = np.concatenate([[0], np.cumsum([len(t[0]) for t in trees])]).astype(np.int64)
    terminal = parts[5].astype(np.float64)
    leaves = parts[0] < 0
    terminal[leaves] += [average_path_length(int(s)) for s in parts[4][leaves]]

    def paths(b):
        return b.forest_path_length(parts[0], parts[1], parts[2], parts[3], terminal, offsets, loads)

    return {f"build_tree gini depth {depth}": gini, "build_tree mse depth 3": mse,
            "apply_tree": apply, "build_itree psi 256": itree,
            "forest_path_length 100 trees": paths}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--cols", type=int, default=30)
    ap.add_argument("--depth", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    available = kernels.backends()
    if "native" not in available:
        print("compiled backend not built; only the numpy fallback is available")
    print(f"{'kernel':32s} {'python s':>10s} {'native s':>10s} {'speedup':>8s}  identical")
    for name, fn in cases(args.rows, args.cols, args.depth, args.seed).items():
        tp, outp = best_of(lambda: fn(available["python"]), args.repeat)
        if "native" in available:
            tn, outn = best_of(lambda: fn(available["native"]), args.repeat)
            print(f"{name:32s} {tp:10.4f} {tn:10.4f} {tp / tn:8.1f}x  {same(outp, outn)}")
        else:
            print(f"{name:32s} {tp:10.4f} {'-':>10s} {'-':>8s}  -")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
