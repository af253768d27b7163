"""Compare the numba and numpy interface-power kernels.

    python3 benchmarks/bench_kernels.py [--repeat N] [--sim]

Kernel timings use both implementations in one process.  ``--sim`` also
times a full WECC-9 proposed-model run per backend in a subprocess, with
GFLCOI_PURE_NUMPY toggling the selection.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gflcoi.kernels import interface_powers_loops, interface_powers_numpy
from gflcoi._accel import HAVE_NUMBA

SIZES = [(2, 1), (10, 10), (50, 50), (200, 200)]

SIM_SNIPPET = """
import time
from gflcoi import caseio
from gflcoi.sim import SimConfig, simulate_coi
from gflcoi._accel import backend
case = caseio.parse_case(caseio.bundled_case_path("wecc9_gfl")).model
system = case.to_system()
dist = caseio.to_disturbance(case, caseio.DisturbanceEntry(bus=9, g_pu=0.2))
simulate_coi(system, dist, SimConfig(0.002, 0.1))  # warm-up / compile
t = time.perf_counter()
simulate_coi(system, dist, SimConfig(0.002, 10.0))
print(backend(), time.perf_counter() - t)
"""


def random_inputs(ng, nf, rng):
    def cplx(*shape):
        return rng.normal(size=shape) + 1j * rng.normal(size=shape)

    return (rng.uniform(0.9, 1.1, ng), rng.uniform(-1, 1, ng), rng.uniform(0.1, 1, nf),
            rng.uniform(-1, 1, nf), cplx(ng, ng), cplx(ng, nf), cplx(nf, nf))


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    print(f"{'ng':>4} {'nf':>4} {'numpy [us]':>12} {'numba [us]':>12} {'speedup':>8} {'max diff':>10}")
    for ng, nf in SIZES:
        args = random_inputs(ng, nf, rng)
        ref = interface_powers_numpy(*args)
        got = interface_powers_loops(*args)  # compiles on first call
        diff = max(float(np.max(np.abs(a - b), initial=0.0)) for a, b in zip(ref, got))
        n = max(1, repeat // max(1, ng * nf // 100))
        t_np = min(timeit.repeat(lambda: interface_powers_numpy(*args), number=n, repeat=3)) / n
        t_nb = min(timeit.repeat(lambda: interface_powers_loops(*args), number=n, repeat=3)) / n
        print(f"{ng:>4} {nf:>4} {t_np * 1e6:>12.2f} {t_nb * 1e6:>12.2f} "
              f"{t_np / t_nb:>8.2f} {diff:>10.1e}")


def bench_sim():
    for flag in ("0", "1"):
        env = dict(os.environ, GFLCOI_PURE_NUMPY=flag)
        out = subprocess.run([sys.executable, "-c", SIM_SNIPPET], env=env, check=True,
                             capture_output=True, text=True).stdout.split()
        print(f"simulate_coi 10 s, backend={out[0]:<6} {float(out[1]):.3f} s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--sim", action="store_true")
    ns = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba not available (or disabled); both columns use plain Python loops")
    bench_kernels(ns.repeat)
    if ns.sim:
        bench_sim()


if __name__ == "__main__":
    main()
