"""Compare the compiled and pure-Python analysis kernels.

    python benchmarks/bench_kernels.py [--repeat N] [--horizon-s S]

Builds an availability curve over a fig1-style frame with a periodic
critical load, then times ``cumulative_at`` and ``first_intersection`` in
both implementations and checks that they agree.
"""
import argparse
import timeit

import numpy as np

from partsched import _kernels_py, kernels
from partsched.analysis import partition_intervals
from partsched.frames import generate_major_frame
from partsched.model import MS, S, PartitionSpec


def workload(horizon: int):
    parts = [PartitionSpec(1, 2 * S, 250 * MS), PartitionSpec(2, 2 * S, 250 * MS),
             PartitionSpec(3, 4 * S, 1 * S), PartitionSpec(4, 8 * S, 1500 * MS)]
    frame = generate_major_frame(parts)
    own = partition_intervals(frame, 3, horizon)
    # carve a 3 ms critical burst out of every 20 ms
    pieces = []
    for lo, hi in own:
        t = lo
        while t < hi:
            burst = (t // (20 * MS)) * 20 * MS
            cut_lo, cut_hi = burst, burst + 3 * MS
            end = min(hi, burst + 20 * MS)
            if t < cut_lo:
                pieces.append((t, min(cut_lo, end)))
            if max(t, cut_hi) < end:
                pieces.append((max(t, cut_hi), end))
            t = end
    starts = np.array([a for a, _ in pieces], dtype=np.int64)
    ends = np.array([b for _, b in pieces], dtype=np.int64)
    return starts, ends


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--horizon-s", type=int, default=80, help="curve horizon in seconds")
    args = ap.parse_args()

    horizon = args.horizon_s * S
    resolution = MS
    n = horizon // resolution
    starts, ends = workload(horizon)
    budgets = np.array([5 * MS, 20 * MS], dtype=np.int64)
    periods = np.array([100 * MS, 400 * MS], dtype=np.int64)
    budget = 2 * S  # large enough to walk most of the curve

    impls = [_kernels_py] + ([kernels.compiled_impl] if kernels.compiled_impl is not None else [])
    if len(impls) == 1:
        print("compiled extension not built; timing the pure-Python kernels only")
    results, timings = [], {}
    for impl in impls:
        avail = impl.cumulative_at(starts, ends, resolution, n)
        results.append((avail.tolist(), impl.first_intersection(avail, resolution, budget, budgets, periods)))
        t_cum = min(timeit.repeat(lambda: impl.cumulative_at(starts, ends, resolution, n),
                                  number=1, repeat=args.repeat))
        t_int = min(timeit.repeat(lambda: impl.first_intersection(avail, resolution, budget, budgets, periods),
                                  number=1, repeat=args.repeat))
        timings[impl.IMPLEMENTATION] = (t_cum, t_int)
    assert all(r == results[0] for r in results), "implementations disagree"

    print(f"intervals={len(starts)} samples={n + 1} response={results[0][1]} steps")
    print(f"{'impl':<8} {'cumulative_at':>14} {'first_intersection':>19}")
    for name, (a, b) in timings.items():
        print(f"{name:<8} {a * 1e3:>12.2f}ms {b * 1e3:>17.2f}ms")
    if "cython" in timings:
        py, cy = timings["python"], timings["cython"]
        print(f"speedup  {py[0] / cy[0]:>13.1f}x {py[1] / cy[1]:>18.1f}x")


if __name__ == "__main__":
    main()
