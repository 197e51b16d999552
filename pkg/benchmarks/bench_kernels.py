"""Benchmark the compiled piano-roll kernels against the numpy fallback.

Run as ``python benchmarks/bench_kernels.py``.  Reports per-call wall time
for each kernel on randomized rolls and the resulting speedup.
"""

import time

import numpy as np

from rollguide import kernels
from rollguide.kernels import _fallback


def random_grids(rng, frames=1024, notes=60):
    vel = np.zeros((128, frames), dtype=np.uint8)
    onset = np.zeros_like(vel)
    for _ in range(notes):
        p = int(rng.integers(0, 128))
        s = int(rng.integers(0, frames - 8))
        d = int(rng.integers(1, 32))
        vel[p, s:s + d] = int(rng.integers(1, 128))
        onset[p, s] = 1
    onset &= (vel > 0).astype(np.uint8)
    return vel, onset


def bench(fn, args_list, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for args in args_list:
            fn(*args)
        best = min(best, time.perf_counter() - start)
    return best / len(args_list)


def main():
    rng = np.random.default_rng(0)
    grids = [random_grids(rng) for _ in range(50)]
    cases = [
        ("pitch_class_profile", [(v,) for v, _ in grids]),
        ("density_counts", [(v, o, 128) for v, o in grids]),
        ("frame_chord_codes", [(v,) for v, _ in grids]),
        ("longest_run_codes", [(v, 128) for v, _ in grids]),
        ("smooth_velocity_runs", [(v, o) for v, o in grids]),
    ]
    active = kernels.IMPL
    print(f"active implementation: {active}")
    if active == _fallback.IMPL:
        print("compiled extension unavailable; benchmarking fallback only")
    header = f"{'kernel':<24}{'compiled':>12}{'fallback':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, args_list in cases:
        t_fast = bench(getattr(kernels, name), args_list)
        t_slow = bench(getattr(_fallback, name), args_list)
        ratio = t_slow / t_fast if t_fast > 0 else float("inf")
        print(f"{name:<24}{t_fast * 1e6:>10.1f}us{t_slow * 1e6:>10.1f}us"
              f"{ratio:>9.1f}x")


if __name__ == "__main__":
    main()
