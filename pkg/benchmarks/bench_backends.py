#!/usr/bin/env python3
"""Side-by-side benchmark of the numba and numpy backends.

The backends consume identical pre-generated draws, so outputs must match
bit for bit; this script times the hot paths and validates that equality.
JIT compilation is warmed up first and not counted.
"""

import time

import numpy as np

import avoidkit as ak
from avoidkit import backend
from avoidkit._kernels import histogram_jam, recency_jam, warmup

ROUNDS = 1_000_000


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return time.perf_counter() - t0, out


def main():
    if not backend.numba_available():
        print("numba not installed; nothing to compare")
        return

    print("Warming up JIT compilation...")
    t0 = time.perf_counter()
    warmup()
    print(f"warmup: {time.perf_counter() - t0:.1f}s\n")

    pair5 = ak.kernel_process(ak.symmetric_pair_kernel(5))
    cases = {
        "sample K8 keep-stack": lambda: ak.sample_trajectory(
            ak.iterate_extension(pair5, 8, "keep"), ROUNDS, seed=1),
        "sample K7 add-stack ": lambda: ak.sample_trajectory(
            ak.iterate_extension(pair5.as_posac(), 7, "add"), ROUNDS, seed=1,
            debug=True),
    }

    print(f"{'case':<24}{'numba (s)':>10}{'numpy (s)':>11}{'speedup':>9}  equal")
    print("-" * 62)
    for name, fn in cases.items():
        backend.set_backend("numba")
        t_nb, out_nb = timed(fn)
        backend.set_backend("numpy")
        t_np, out_np = timed(fn)
        backend.set_backend("auto")
        same = np.array_equal(out_nb.configs, out_np.configs)
        print(f"{name:<24}{t_nb:>10.3f}{t_np:>11.3f}{t_np / t_nb:>8.1f}x  {'ok' if same else 'MISMATCH'}")

    traj = ak.sample_trajectory(ak.iterate_extension(pair5, 8, "keep"), ROUNDS, seed=2)
    scans = {
        "avoidance scan      ": lambda: ak.check_avoidance(traj),
        "histogram jam (f=2) ": lambda: histogram_jam(
            traj.configs[:, 0].astype(np.int64), 8, 2),
        "recency jam (f=2)   ": lambda: recency_jam(
            traj.configs[:, 0].astype(np.int64), 8, 2, True),
    }
    for name, fn in scans.items():
        backend.set_backend("numba")
        t_nb, out_nb = timed(fn)
        backend.set_backend("numpy")
        t_np, out_np = timed(fn)
        backend.set_backend("auto")
        if isinstance(out_nb, np.ndarray):
            same = np.array_equal(out_nb, out_np)
        else:
            same = out_nb.to_json() == out_np.to_json()
        print(f"{name:<24}{t_nb:>10.3f}{t_np:>11.3f}{t_np / t_nb:>8.1f}x  {'ok' if same else 'MISMATCH'}")


if __name__ == "__main__":
    main()
