"""Hot numeric kernels with optional numba acceleration.

Each kernel exists as a pure-numpy implementation (``*_py``). When numba is
available and the environment variable ``MODALPOP_NO_NUMBA`` is not set to
``"1"``, the public name is bound to an ``@njit``-compiled version; otherwise
it falls back to the numpy path. ``benchmarks/bench_kernels.py`` compares the
two paths.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("MODALPOP_NO_NUMBA", "0") != "1"

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

def _jit(func):
    if USE_NUMBA:
        return njit(cache=True)(func)
    return func


def newmark_loop_py(keff_inv, m, c, k, load, dt, gamma, beta, u0, v0, a0_vec):
    """Time-stepping loop of the Newmark-beta method.

    Parameters are the inverse effective stiffness, system matrices, the
    force time series (n_free x T), the step size, the Newmark parameters,
    and the initial state. Returns accelerations (n_free x T).
    """
    n, steps = load.shape
    acc = np.zeros((n, steps))
    u = u0.copy()
    v = v0.copy()
    a = a0_vec.copy()
    acc[:, 0] = a

    c0 = 1.0 / (beta * dt * dt)
    c1 = gamma / (beta * dt)
    c2 = 1.0 / (beta * dt)
    c3 = 1.0 / (2.0 * beta) - 1.0
    c4 = gamma / beta - 1.0
    c5 = dt * (gamma / (2.0 * beta) - 1.0)

    for t in range(1, steps):
        rhs = (
            load[:, t]
            + m @ (c0 * u + c2 * v + c3 * a)
            + c @ (c1 * u + c4 * v + c5 * a)
        )
        u_new = keff_inv @ rhs
        a_new = c0 * (u_new - u) - c2 * v - c3 * a
        v_new = v + dt * ((1.0 - gamma) * a + gamma * a_new)
        u, v, a = u_new, v_new, a_new
        acc[:, t] = a
    return acc


def fp_iterate_py(a_tilde, x0, known, iters):
    """Iterative feature propagation over a normalized adjacency.

    Known rows are reset to their original values after every iteration.
    Returns the propagated matrix and the max-abs update delta on unknown
    rows per iteration.
    """
    x = x0.copy()
    n = x0.shape[0]
    deltas = np.zeros(iters)
    for it in range(iters):
        x_new = a_tilde @ x
        for i in range(n):
            if known[i]:
                x_new[i, :] = x0[i, :]
        delta = 0.0
        for i in range(n):
            if not known[i]:
                d = np.max(np.abs(x_new[i, :] - x[i, :]))
                if d > delta:
                    delta = d
        deltas[it] = delta
        x = x_new
    return x, deltas


def rdt_stack_py(q, threshold, seg_len):
    """Average level-crossing-triggered segments of a random response.

    Triggers at upward crossings of ``threshold`` (positive slope). Returns
    the averaged free-decay signature and the number of stacked segments.
    """
    n = q.shape[0]
    signature = np.zeros(seg_len)
    count = 0
    i = 1
    while i < n - seg_len:
        if q[i - 1] < threshold <= q[i]:
            signature += q[i : i + seg_len]
            count += 1
            i += seg_len
        else:
            i += 1
    if count > 0:
        signature /= count
    return signature, count


newmark_loop = _jit(newmark_loop_py)
fp_iterate = _jit(fp_iterate_py)
rdt_stack = _jit(rdt_stack_py)
