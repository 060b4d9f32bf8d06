"""Benchmark the numba-compiled kernels against the pure-numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``. The jitted path is what
``import modalpop`` binds by default; set ``MODALPOP_NO_NUMBA=1`` to force
the fallback in production code. Here both variants are timed side by side
(``*_py`` is always the plain-python source of the jitted function).
"""

import time

import numpy as np

from modalpop import kernels

N_REPEATS = 5


def _time(fn, *args):
    fn(*args)  # warm-up (includes JIT compilation for the numba path)
    best = np.inf
    for _ in range(N_REPEATS):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_newmark():
    rng = np.random.default_rng(0)
    n, steps = 50, 2000
    a = rng.normal(size=(n, n))
    k = a @ a.T + n * np.eye(n)
    m = np.eye(n) * 2.0
    c = 0.01 * k
    dt = 0.005
    keff = k + (0.5 / (0.25 * dt)) * c + (1.0 / (0.25 * dt * dt)) * m
    keff_inv = np.linalg.inv(keff)
    load = rng.normal(size=(n, steps))
    z = np.zeros(n)
    args = (keff_inv, m, c, k, load, dt, 0.5, 0.25, z, z, z)
    return "newmark_loop", args


def bench_fp():
    rng = np.random.default_rng(1)
    n, t = 120, 2000
    a = (rng.random((n, n)) < 0.05).astype(float)
    a = np.maximum(a, a.T)
    np.fill_diagonal(a, 0)
    deg = np.maximum(a.sum(axis=1), 1.0)
    a_tilde = a / np.sqrt(deg[:, None] * deg[None, :])
    x0 = rng.normal(size=(n, t))
    known = rng.random(n) < 0.18
    x0[~known] = 0.0
    return "fp_iterate", (a_tilde, x0, known, 40)


def bench_rdt():
    rng = np.random.default_rng(2)
    q = rng.normal(size=200_000)
    return "rdt_stack", (q, np.sqrt(2.0) * float(np.std(q)), 400)


def main():
    if not kernels.USE_NUMBA:
        raise SystemExit(
            "numba path disabled (MODALPOP_NO_NUMBA=1); "
            "re-run without the flag to compare both paths"
        )
    print(f"{'kernel':<14} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    for make in (bench_newmark, bench_fp, bench_rdt):
        name, args = make()
        t_py = _time(getattr(kernels, name + "_py"), *args)
        t_nb = _time(getattr(kernels, name), *args)
        print(
            f"{name:<14} {t_py * 1e3:>12.2f} {t_nb * 1e3:>12.2f} "
            f"{t_py / t_nb:>8.1f}x"
        )


if __name__ == "__main__":
    main()
