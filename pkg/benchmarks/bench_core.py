"""Compare the compiled and numpy implementations of the hot loops.

    python3 benchmarks/bench_core.py [--n 3000] [--repeat 3]

Reports best-of-repeat wall time per kernel and checks that both backends
return the same result.
"""
import argparse
import time

import numpy as np

from connlap import _core_py
from connlap.manifolds import sample

try:
    from connlap import _core
except ImportError:  # extension not built
    _core = None


def best_time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=3000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    X = np.ascontiguousarray(sample("s2", args.n, seed=0).points)
    cutoff = 0.3
    n, q = len(X), 2
    impls = [("numpy", _core_py)] + ([("compiled", _core)] if _core is not None else [])
    rows = []
    results = {}
    for name, impl in impls:
        t_pairs, (I, J, d2) = best_time(lambda: impl.pairs_within(X, cutoff, 0, n), args.repeat)
        rng = np.random.default_rng(0)
        B = np.ascontiguousarray(rng.standard_normal((len(I), q, q)))
        diag = rng.random(n)
        v = rng.standard_normal(n * q)
        t_mv, y = best_time(lambda: impl.block_matvec(n, q, I, J, B, diag, v), args.repeat)
        w = np.exp(-d2)
        t_sc, C = best_time(lambda: impl.scatter_matrices(X, I, J, w), args.repeat)
        results[name] = (I, J, d2, y, C)
        rows.append((name, t_pairs, t_mv, t_sc, len(I)))
    print(f"n={n}, edges={rows[0][4]}")
    print(f"{'backend':<10}{'pairs_within':>14}{'block_matvec':>14}{'scatter':>12}")
    for name, a, b, c, _ in rows:
        print(f"{name:<10}{a:>13.4f}s{b:>13.4f}s{c:>11.4f}s")
    if len(rows) == 2:
        ref, got = results["numpy"], results["compiled"]
        same_pairs = np.array_equal(ref[0], got[0]) and np.array_equal(ref[1], got[1])
        print("pairs identical:", same_pairs)
        print("max |d2| diff:", float(np.max(np.abs(ref[2] - got[2]))))
        print("max matvec diff:", float(np.max(np.abs(ref[3] - got[3]))))
        print("max scatter diff:", float(np.max(np.abs(ref[4] - got[4]))))
        print("speedup:", " ".join(f"{rows[0][k] / rows[1][k]:.1f}x" for k in (1, 2, 3)))


if __name__ == "__main__":
    main()
