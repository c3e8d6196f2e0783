"""Benchmark the hot synthesis kernels: numba JIT versus pure numpy.

Run without arguments to measure both backends (each in its own process,
since the backend is fixed at import time):

    python benchmarks/bench_kernels.py

The measured pipeline is the simulator's inner loop: first-order lag
trajectory, additive model noise, sensor chain, block averaging. Sizes
mirror the characterization sweep (101 holds of 30 s at 1 kS/s).
"""

import json
import os
import subprocess
import sys
import time

import numpy as np

N_TICKS = 30_000  # one 30 s hold at 1 kS/s
N_HOLDS = 101
BLOCK = 500  # 500 ms blocks


def measure() -> dict:
    from drsim import _kernels

    rng = np.random.default_rng(0)
    noise = rng.standard_normal(N_TICKS)

    # warm-up triggers JIT compilation on the numba path
    _kernels.slew_trace(36.0, 72.0, 0.98, N_TICKS)
    _kernels.sensor_trace(np.full(N_TICKS, 50.0), 0.01, 0.03, 754.0, 0.1, 0.0, 1e-3)
    _kernels.block_means(noise, BLOCK)

    start = time.perf_counter()
    total = 0.0
    for k in range(N_HOLDS):
        traj = _kernels.slew_trace(36.25, 36.25 + 36.25 * k / (N_HOLDS - 1), 0.98, N_TICKS)
        traj = traj + 11.0 * noise
        measured = _kernels.sensor_trace(traj, 0.008, 0.0, 754.0, 0.3, 0.0, 1e-3)
        total += float(_kernels.block_means(measured, BLOCK).sum())
    elapsed = time.perf_counter() - start

    ticks = N_TICKS * N_HOLDS
    return {
        "backend": _kernels.backend(),
        "seconds": elapsed,
        "mticks_per_s": ticks / elapsed / 1e6,
        "checksum": total,
    }


def main() -> int:
    if os.environ.get("DRSIM_BENCH_CHILD"):
        print(json.dumps(measure()))
        return 0

    results = []
    for flag in ("1", "0"):
        env = dict(os.environ, DRSIM_NUMBA=flag, DRSIM_BENCH_CHILD="1")
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__)],
            env=env,
            capture_output=True,
            text=True,
            check=True,
        )
        results.append(json.loads(out.stdout.strip().splitlines()[-1]))

    print(f"{'backend':8s} {'seconds':>9s} {'Mticks/s':>9s}")
    for r in results:
        print(f"{r['backend']:8s} {r['seconds']:9.3f} {r['mticks_per_s']:9.1f}")
    fast, slow = results[0], results[1]
    if fast["seconds"] < slow["seconds"]:
        print(f"speedup: {slow['seconds'] / fast['seconds']:.2f}x ({fast['backend']} over {slow['backend']})")
    else:
        print(f"speedup: {fast['seconds'] / slow['seconds']:.2f}x ({slow['backend']} over {fast['backend']})")
    drift = abs(fast["checksum"] - slow["checksum"]) / abs(slow["checksum"])
    print(f"checksum relative difference: {drift:.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
