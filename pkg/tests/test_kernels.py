"""The jitted kernels must agree with their pure-numpy sources exactly
(same floating-point operations, so identical results are expected)."""

import numpy as np

from modalpop import kernels


def test_use_numba_flag_respects_env():
    import importlib
    import os

    original = os.environ.get("MODALPOP_NO_NUMBA")
    try:
        os.environ["MODALPOP_NO_NUMBA"] = "1"
        mod = importlib.reload(kernels)
        assert mod.USE_NUMBA is False
        assert mod.newmark_loop is mod.newmark_loop_py
    finally:
        if original is None:
            os.environ.pop("MODALPOP_NO_NUMBA", None)
        else:
            os.environ["MODALPOP_NO_NUMBA"] = original
        importlib.reload(kernels)


def test_newmark_paths_agree():
    rng = np.random.default_rng(0)
    n, steps = 6, 50
    a = rng.normal(size=(n, n))
    k = a @ a.T + n * np.eye(n)
    m = np.eye(n)
    c = 0.02 * k
    dt = 0.005
    keff = k + (0.5 / (0.25 * dt)) * c + (1.0 / (0.25 * dt * dt)) * m
    keff_inv = np.linalg.inv(keff)
    load = rng.normal(size=(n, steps))
    z = np.zeros(n)
    args = (keff_inv, m, c, k, load, dt, 0.5, 0.25, z, z, load[:, 0].copy())
    out_py = kernels.newmark_loop_py(*args)
    out = kernels.newmark_loop(*args)
    np.testing.assert_allclose(out, out_py, rtol=1e-12, atol=1e-12)


def test_fp_paths_agree():
    rng = np.random.default_rng(1)
    n, t = 12, 20
    a = (rng.random((n, n)) < 0.3).astype(float)
    a = np.maximum(a, a.T)
    np.fill_diagonal(a, 0)
    deg = np.maximum(a.sum(axis=1), 1.0)
    a_tilde = a / np.sqrt(deg[:, None] * deg[None, :])
    x0 = rng.normal(size=(n, t))
    known = rng.random(n) < 0.4
    x0[~known] = 0.0
    x_py, d_py = kernels.fp_iterate_py(a_tilde, x0, known, 10)
    x, d = kernels.fp_iterate(a_tilde, x0, known, 10)
    np.testing.assert_allclose(x, x_py, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(d, d_py, rtol=1e-12, atol=1e-14)


def test_rdt_paths_agree():
    rng = np.random.default_rng(2)
    q = rng.normal(size=5000)
    threshold = np.sqrt(2.0) * float(np.std(q))
    sig_py, n_py = kernels.rdt_stack_py(q, threshold, 100)
    sig, n = kernels.rdt_stack(q, threshold, 100)
    assert n == n_py > 0
    np.testing.assert_allclose(sig, sig_py, rtol=1e-12, atol=1e-14)
