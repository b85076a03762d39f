"""Compiled vs pure-numpy kernels.

Times the numba loops against their vectorized numpy counterparts on the
same inputs, checks they agree, then times covariance assembly end to end
in two subprocesses, one with ``MVGEOSTAT_NUMBA=0``.

    python3 benchmarks/bench_kernels.py [--size 200000] [--repeat 5]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from mvgeostat import kernels


def best_of(fn, repeat):
    fn()  # compile / warm caches
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


ASSEMBLE = """
import time
import numpy as np
from mvgeostat import ParameterSet, assemble_sigma, generate_locations
from mvgeostat._accel import USE_NUMBA
theta = ParameterSet.from_vector([1, 1, 0.09, 0.5, 1, 0.5])
locs = generate_locations("uniform_random", {n}, seed=1)
assemble_sigma(theta, generate_locations("uniform_random", 50, seed=2))
t0 = time.perf_counter()
assemble_sigma(theta, locs)
print(USE_NUMBA, time.perf_counter() - t0)
"""


def assemble_timing(n, numba_flag):
    env = dict(os.environ, MVGEOSTAT_NUMBA=numba_flag)
    out = subprocess.run(
        [sys.executable, "-c", ASSEMBLE.format(n=n)], env=env, capture_output=True, text=True, check=True
    ).stdout.split()
    return float(out[1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--assemble-n", type=int, default=1500)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    x = rng.uniform(1e-3, 30.0, args.size)
    q = rng.integers(0, 2**16, size=(2, args.size), dtype=np.int64)
    nu05, nu23 = np.full_like(x, 0.5), np.full_like(x, 2.3)
    cases = [
        ("bessel_k nu=0.5", lambda: kernels.bessel_k_nb(nu05, x), lambda: kernels.bessel_k_np(nu05, x)),
        ("bessel_k nu=2.3", lambda: kernels.bessel_k_nb(nu23, x), lambda: kernels.bessel_k_np(nu23, x)),
        ("matern nu=0.75", lambda: kernels.matern_correlation_nb(x, 0.75), lambda: kernels.matern_correlation_np(x, 0.75)),
        ("morton keys", lambda: kernels.morton_keys_nb(q[0], q[1], 16), lambda: kernels.morton_keys_np(q[0], q[1], 16)),
    ]
    print(f"{'kernel':<18}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max rel diff':>15}")
    for name, f_nb, f_np in cases:
        t_nb, t_np = best_of(f_nb, args.repeat), best_of(f_np, args.repeat)
        a, b = np.asarray(f_nb(), dtype=float), np.asarray(f_np(), dtype=float)
        diff = float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))
        print(f"{name:<18}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.2f}{diff:>15.2e}")

    t_on = assemble_timing(args.assemble_n, "1")
    t_off = assemble_timing(args.assemble_n, "0")
    print(f"assemble_sigma n={args.assemble_n}: numba {t_on:.3f} s, numpy {t_off:.3f} s, speedup {t_off / t_on:.2f}")


if __name__ == "__main__":
    main()
