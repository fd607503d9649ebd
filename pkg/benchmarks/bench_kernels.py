"""Time the compiled and numpy kernel backends on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--seed 0]

Prints the best wall time per kernel and backend, and the speedup of the
compiled kernels over the numpy fallback. Results are checked for equality
before timing.
"""

import argparse
import timeit

import numpy as np

from rcpd.kernels import available_backends
from rcpd.rules import default_rcpd_rules
from rcpd.trace_model import MAX_RANK


def workloads(seed):
    rng = np.random.default_rng(seed)
    cur, hist = default_rcpd_rules().threshold_arrays()
    windows = np.exp2(rng.uniform(0, 10.1, size=(1_000_000, 6))).astype(np.int64).clip(1, MAX_RANK)
    # many short traces: the replay hot path
    traces = [np.exp2(rng.uniform(0, 10.1, size=rng.integers(20, 120))).astype(np.int64) for _ in range(2000)]
    n, n_bins = 50_000, 64
    codes = rng.integers(0, n_bins, size=(n, 6)).astype(np.int32)
    rows = np.arange(n, dtype=np.int64)
    resid = rng.normal(size=n)
    weight = rng.uniform(0.5, 2.0, size=n)
    return {
        "match_windows (1M rows)": lambda k: k.match_windows(windows, cur, hist, MAX_RANK),
        "first_firing (2000 traces)": lambda k: [k.first_firing(t, cur, hist, MAX_RANK) for t in traces],
        "best_split (50k rows)": lambda k: k.best_split(codes, rows, resid, weight, n_bins, 5),
    }


def same(a, b):
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; timing the numpy fallback only")
    print(f"{'kernel':<28}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in workloads(args.seed).items():
        results = {b: fn(m) for b, m in backends.items()}
        ref = results["python"]
        assert all(same(r, ref) for r in results.values()), f"{name}: backends disagree"
        times = {b: min(timeit.repeat(lambda m=m: fn(m), number=1, repeat=args.repeat)) for b, m in backends.items()}
        line = f"{name:<28}" + "".join(f"{times[b] * 1e3:>10.1f}ms" for b in backends)
        if "cython" in times:
            line += f"{times['python'] / times['cython']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
