"""Timing comparison: compiled kernels vs the pure-Python fallback.

Run:  python benchmarks/bench_kernels.py
"""

import random
import time

from gridsentry import kernels
from gridsentry.kernels import pure


def _timestamps(n, seed=7):
    rng = random.Random(seed)
    t = 0
    out = []
    for _ in range(n):
        t += rng.randint(1, 400)
        out.append(t)
    return out


def _time(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    print(f"active backend: {kernels.BACKEND}")
    compiled = None
    if kernels.BACKEND == "compiled":
        from gridsentry.kernels import _ckernels as compiled

    rows = []
    for n in (10_000, 100_000, 500_000):
        ts = _timestamps(n)
        pure_s = _time(pure.dos_window_flags, ts, 2_083, 12)
        row = [f"dos_window_flags n={n}", f"{pure_s * 1e3:9.2f} ms"]
        if compiled is not None:
            comp_s = _time(compiled.dos_window_flags, ts, 2_083, 12)
            row += [f"{comp_s * 1e3:9.2f} ms", f"{pure_s / comp_s:6.1f}x"]
        rows.append(row)

    pure_s = _time(pure.count_cyclic_successors, 2400, repeats=3)
    row = ["count_cyclic_successors m=2400", f"{pure_s * 1e3:9.2f} ms"]
    if compiled is not None:
        comp_s = _time(compiled.count_cyclic_successors, 2400, repeats=3)
        row += [f"{comp_s * 1e3:9.2f} ms", f"{pure_s / comp_s:6.1f}x"]
    rows.append(row)

    header = ["kernel", "pure"] + (["compiled", "speedup"] if compiled else [])
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(len(header))]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for r in rows:
        print("  ".join(v.ljust(w) for v, w in zip(r, widths)))


if __name__ == "__main__":
    main()
