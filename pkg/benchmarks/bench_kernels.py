"""Timing of the compiled kernels against their numpy fallbacks.

Run with ``python3 benchmarks/bench_kernels.py``. The numpy path is what
runs when ``TNSKETCH_DISABLE_NUMBA=1``.
"""
import itertools
import json
import time

import numpy as np

from tnsketch import _accel


def _best(fn, reps=5):
    best = float("inf")
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def perm_case(n=8, seed=0):
    g = np.random.default_rng(seed)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if g.random() < 0.5]
    eu = np.array([p[0] for p in pairs], dtype=np.int64)
    ev = np.array([p[1] for p in pairs], dtype=np.int64)
    logw = np.log(g.integers(2, 64, len(pairs))).astype(float)
    out = np.log(g.integers(1, 64, n)).astype(float)
    return perms, eu, ev, logw, out


def cut_case(n=16, n_edges=40, seed=0):
    g = np.random.default_rng(seed)
    tails = np.zeros(n_edges, dtype=np.int64)
    for e in range(n_edges):
        for v in g.choice(n, int(g.integers(2, 4)), replace=False):
            tails[e] |= 1 << int(v)
    dangling = g.random(n_edges) < 0.2
    logw = np.log(g.integers(2, 64, n_edges)).astype(float)
    subsets = np.arange(1, 1 << n, dtype=np.int64)
    return tails, tails, dangling, logw, subsets


def main():
    rows = []
    a = perm_case()
    b = cut_case()
    cases = [("perm_min_row_log n=8 (40320 orderings)", _accel.perm_min_row_log, a),
             ("subset_cuts n=16 (65535 subsets)", _accel.subset_cuts, b)]
    for name, fn, args in cases:
        ref = fn(*args, use_numba=False)
        t_np = _best(lambda: fn(*args, use_numba=False))
        row = {"kernel": name, "numpy_s": t_np}
        if _accel.HAS_NUMBA:
            fn(*args, use_numba=True)          # compile
            got = fn(*args, use_numba=True)
            row["numba_s"] = _best(lambda: fn(*args, use_numba=True))
            row["speedup"] = t_np / row["numba_s"]
            row["max_abs_diff"] = float(np.max(np.abs(got - ref)))
        rows.append(row)
    print(json.dumps(rows, indent=2))


if __name__ == "__main__":
    main()
