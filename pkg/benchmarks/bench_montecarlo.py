"""Compare the numba and numpy Monte Carlo backends on one block of pulses.

Run with ``python benchmarks/bench_montecarlo.py [--pulses N]``. The script
checks that both backends produce identical counts, then reports throughput.
"""

import argparse
import time

import numpy as np

from rfiqkd.montecarlo import DriftSchedule, RunSpec, run_block
from rfiqkd.params import APD, ProtocolParams

PROTO = ProtocolParams(mu=0.58, nu=0.27, omega=0.0, p_mu=0.52, p_nu=0.37, p_omega=0.11,
                       p_z=0.9, n_pulses=1e6)


def time_backend(backend, spec, drift, repeats):
    run_block(0, PROTO, APD, 50.0, drift, spec, backend=backend)  # warm-up / JIT compile
    best, counts = float("inf"), None
    for _ in range(repeats):
        start = time.perf_counter()
        counts = run_block(0, PROTO, APD, 50.0, drift, spec, backend=backend)
        best = min(best, time.perf_counter() - start)
    return best, counts


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pulses", type=int, default=1_000_000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args(argv)

    spec = RunSpec(args.pulses, seed=1, block_size=args.pulses)
    drift = DriftSchedule.linear_window(0.0, 0.2, args.pulses)
    t_numba, c_numba = time_backend("numba", spec, drift, args.repeats)
    t_numpy, c_numpy = time_backend("numpy", spec, drift, args.repeats)
    same = np.array_equal(c_numba, c_numpy)
    for name, t in (("numba", t_numba), ("numpy", t_numpy)):
        print(f"{name:6s} {t:8.3f} s  {args.pulses / t / 1e6:8.2f} Mpulse/s")
    print(f"speedup {t_numpy / t_numba:.1f}x, identical counts: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
