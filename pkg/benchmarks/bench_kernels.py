"""Time the compiled and pure-numpy probe kernels on the same inputs.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. The compiled
path is warmed up once so JIT time is excluded.
"""

import argparse
import time

import numpy as np

from widthlab import kernels
from widthlab._accel import HAVE_NUMBA


def best_of(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    d, d0, n = 4096, 20, 512
    a0, da = rng.standard_normal(d), 0.1 * rng.standard_normal(d)
    w0, dw = rng.standard_normal((d, d0)), 0.1 * rng.standard_normal((d, d0))
    X = rng.standard_normal((n, d0))
    P, Q = rng.standard_normal((20, d0)), rng.standard_normal((20, d0))
    a_mc, w_mc = rng.standard_normal(1 << 15), rng.standard_normal((1 << 15, d0))
    A, B = rng.standard_normal((1024, 1 + d0)), rng.standard_normal((1024, 1 + d0))
    return {
        "decomp_h0": (kernels.decomp_h0_numpy, kernels.decomp_h0_numba,
                      (a0, da, w0, dw, w0 + dw, X, 1.0 / d, 0.01)),
        "ntk_pairs": (kernels.ntk_pairs_numpy, kernels.ntk_pairs_numba,
                      (a0, w0, P, Q, 0.01, 1.0, 1.0)),
        "mc_moments": (kernels.mc_moments_numpy, kernels.mc_moments_numba,
                       (a_mc, w_mc, P, Q, 0.01, 1.0, 1.0)),
        "sq_dists": (kernels.sq_dists_numpy, kernels.sq_dists_numba, (A, B)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy path exists")
        return
    rng = np.random.default_rng(42)
    print(f"{'kernel':<12} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8} {'max |diff|':>11}")
    for name, (np_fn, nb_fn, inputs) in cases(rng).items():
        ref, got = np_fn(*inputs), nb_fn(*inputs)  # also triggers compilation
        diff = float(np.max(np.abs(np.asarray(ref) - np.asarray(got))))
        t_np = best_of(np_fn, inputs, args.repeat)
        t_nb = best_of(nb_fn, inputs, args.repeat)
        print(f"{name:<12} {1e3 * t_np:>10.2f} {1e3 * t_nb:>10.2f} {t_np / t_nb:>8.2f} {diff:>11.2e}")


if __name__ == "__main__":
    main()
