#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run:  python benchmarks/kernel_benchmark.py
The numba path must be importable; set CROSSDIFF_DISABLE_NUMBA only when
timing the fallback in production-like conditions (this script always
times both implementations directly).
"""
import time

import numpy as np

from crossdiff import kernels


def timeit(fn, *args, repeat=5):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    rows = []

    for m, n in ((512, 3), (4096, 3), (4096, 6)):
        pi = rng.uniform(0.5, 2.0, n)
        a = rng.uniform(0.0, 1.0, (n, n))
        a0 = rng.uniform(0.0, 1.0, n)
        mu = rng.uniform(0.1, 1.0, n)
        u = np.ascontiguousarray(rng.uniform(0.2, 3.0, (m, n)))
        w = np.ascontiguousarray(rng.uniform(-2.0, 0.4, (m, n)))
        z = np.ascontiguousarray(rng.standard_normal((m, n)))
        s, eps, eps_eta, dx = 0.5, 1e-3, 1e-3 ** 0.25, 1.0 / m

        cases = [
            ("invert_field", (w, s, pi, eps, 100, 1e-15)),
            ("mobility_fluxes", (u, w, a0, a, mu, s, pi, eps, eps_eta, dx)),
            ("ha_quadform", (u, z, a0, a, pi, s)),
        ]
        for name, args in cases:
            np_time = timeit(kernels.NUMPY_IMPLS[name], *args)
            nb_fn = kernels.NUMBA_IMPLS[name]
            if nb_fn is not None:
                nb_fn(*args)  # warm the JIT once
                nb_time = timeit(nb_fn, *args)
                speedup = f"{np_time / nb_time:6.1f}x"
            else:
                nb_time, speedup = float("nan"), "   n/a"
            rows.append((name, f"{m}x{n}", np_time, nb_time, speedup))

    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<18}{'size':<10}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}")
    for name, size, np_t, nb_t, speedup in rows:
        print(f"{name:<18}{size:<10}{np_t * 1e3:>12.3f}{nb_t * 1e3:>12.3f}{speedup:>9}")


if __name__ == "__main__":
    main()
