"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the two hot kernels (E-step accumulation, grid triggering integrals)
on production-sized synthetic inputs under both HOTSPOT_SIM_BACKEND
settings and prints a timing table.

    python benchmarks/bench_kernels.py [--events 40000] [--repeats 3]
"""

import argparse
import os
import time

import numpy as np

from hotspot_sim import kernels
from hotspot_sim.backend import BACKEND_ENV, NUMBA_AVAILABLE


def make_instance(n_events, seed=0):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0, 1500.0, n_events))
    x = rng.uniform(-15, 15, n_events)
    y = rng.uniform(-14.5, 14.5, n_events)
    mu = rng.uniform(0.005, 0.05, n_events)
    logphi = np.log(mu / 10.0)
    return x, y, t, mu, logphi


def time_call(fn, repeats):
    fn()  # warm-up (JIT compilation on the numba path)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--events", type=int, default=40_000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    x, y, t, mu, logphi = make_instance(args.events)
    theta, omega, sx, sy = 0.7, 0.06, 0.4, 0.4
    index = kernels.build_spatial_index(x, y, t, h=1.2)
    x_edges = np.arange(-15.0, 16.0)
    y_edges = np.arange(-14.5, 15.5)

    cases = {
        "estep windowed (90 d, 1.2 km)": lambda: kernels.estep_stats(
            x, y, t, mu, logphi, theta, omega, sx, sy,
            time_window=90.0, x_reach=1.2, y_reach=1.2, index=index,
        ),
        "grid integrals windowed": lambda: kernels.grid_trig_mass(
            x, y, t, t[-1] + 1.0, theta, omega, sx, sy, x_edges, y_edges,
            time_window=420.0, x_reach=3.0, y_reach=3.0,
        ),
        "grid integrals exact": lambda: kernels.grid_trig_mass(
            x, y, t, t[-1] + 1.0, theta, omega, sx, sy, x_edges, y_edges,
        ),
    }

    backends = ["numpy"] + (["numba"] if NUMBA_AVAILABLE else [])
    print(f"{args.events} events, best of {args.repeats}\n")
    header = f"{'kernel':<32}" + "".join(f"{b:>12}" for b in backends)
    print(header)
    print("-" * len(header))
    results = {}
    for name, fn in cases.items():
        row = f"{name:<32}"
        for backend in backends:
            os.environ[BACKEND_ENV] = backend
            elapsed = time_call(fn, args.repeats)
            results[(name, backend)] = elapsed
            row += f"{elapsed * 1e3:>10.1f}ms"
        print(row)
    os.environ.pop(BACKEND_ENV, None)
    if NUMBA_AVAILABLE:
        print("\nspeedups (numpy / numba):")
        for name in cases:
            ratio = results[(name, "numpy")] / results[(name, "numba")]
            print(f"  {name:<32}{ratio:>6.1f}x")


if __name__ == "__main__":
    main()
