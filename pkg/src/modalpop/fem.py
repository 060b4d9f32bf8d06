"""Planar truss finite elements: assembly, eigen-analysis, Rayleigh damping,
and Newmark time integration under half-duration white-noise excitation."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernels
from .population import TrussSpec

DT_S = 0.005
FS_HZ = 200.0
N_STEPS = 2000
EXCITATION_CUTOFF_STEP = N_STEPS // 2
FORCE_STD_N = 1e3
DEFAULT_ZETA = 0.01


class MechanismError(RuntimeError):
    """Constrained stiffness matrix is singular: the truss is a mechanism."""


@dataclass
class DofMap:
    """Maps node indices to free-DOF indices (x = 2i, y = 2i + 1 globally)."""

    free_dofs: np.ndarray  # global dof index per free dof
    constrained_dofs: set
    free_index: np.ndarray  # global dof -> free index, -1 if constrained

    @property
    def n_free(self) -> int:
        return len(self.free_dofs)

    def free_y_index(self, node: int) -> int:
        """Free-system index of a node's vertical DOF, -1 if constrained."""
        return int(self.free_index[2 * node + 1])


@dataclass
class SystemMatrices:
    K: np.ndarray
    M: np.ndarray
    C: np.ndarray | None = None


@dataclass
class ModalReference:
    """Ground-truth modal properties from eigen-analysis."""

    frequencies_Hz: np.ndarray  # ascending, (n_modes,)
    damping_ratios: np.ndarray
    mode_shapes: np.ndarray  # (N, n_modes) vertical components, unit-max
    rayleigh_alpha: float
    rayleigh_beta: float


@dataclass
class TimeHistory:
    accelerations: np.ndarray  # (N, T) vertical accel per node, m/s^2
    dt_s: float = DT_S
    fs_Hz: float = FS_HZ
    excitation_cutoff_step: int = EXCITATION_CUTOFF_STEP


def build_dofmap(truss: TrussSpec) -> DofMap:
    n_dof = 2 * truss.n_nodes
    constrained = set()
    for node, fix_x, fix_y in truss.supports:
        if fix_x:
            constrained.add(2 * node)
        if fix_y:
            constrained.add(2 * node + 1)
    free = np.array([d for d in range(n_dof) if d not in constrained], dtype=np.int64)
    free_index = np.full(n_dof, -1, dtype=np.int64)
    free_index[free] = np.arange(len(free))
    return DofMap(free_dofs=free, constrained_dofs=constrained, free_index=free_index)


def assemble(truss: TrussSpec) -> tuple[SystemMatrices, DofMap]:
    """Assemble constrained global stiffness and consistent mass matrices."""
    coords = truss.node_coords
    n_dof = 2 * truss.n_nodes
    K = np.zeros((n_dof, n_dof))
    M = np.zeros((n_dof, n_dof))
    ea = truss.youngs_modulus_Pa * truss.area_m2
    rho_a = truss.density_kg_m3 * truss.area_m2
    for i, j in truss.edges:
        dx, dy = coords[j] - coords[i]
        length = np.hypot(dx, dy)
        c, s = dx / length, dy / length
        k_ax = ea / length
        kb = k_ax * np.array([[c * c, c * s], [c * s, s * s]])
        ke = np.block([[kb, -kb], [-kb, kb]])
        ml = rho_a * length / 6.0
        me = ml * np.array(
            [[2, 0, 1, 0], [0, 2, 0, 1], [1, 0, 2, 0], [0, 1, 0, 2]], dtype=float
        )
        dofs = np.array([2 * i, 2 * i + 1, 2 * j, 2 * j + 1])
        K[np.ix_(dofs, dofs)] += ke
        M[np.ix_(dofs, dofs)] += me
    dof = build_dofmap(truss)
    f = dof.free_dofs
    Kf, Mf = K[np.ix_(f, f)], M[np.ix_(f, f)]
    try:
        np.linalg.cholesky(Kf)
    except np.linalg.LinAlgError as exc:
        raise MechanismError(
            f"singular stiffness for {truss.population_id or 'truss'}"
        ) from exc
    return SystemMatrices(K=Kf, M=Mf), dof


def eigen_raw(K: np.ndarray, M: np.ndarray, n_modes: int):
    """Lowest ``n_modes`` solutions of K phi = w^2 M phi.

    Returns circular frequencies (rad/s, ascending) and mass-normalized
    free-DOF mode vectors as columns.
    """
    w2, vecs = scipy.linalg.eigh(K, M, subset_by_index=(0, n_modes - 1))
    if np.any(w2 <= 0):
        raise MechanismError("non-positive eigenvalues: structure invalid")
    return np.sqrt(w2), vecs


def rayleigh(omega1: float, omega2: float, zeta: float = DEFAULT_ZETA):
    """Rayleigh coefficients giving modal damping ``zeta`` at both frequencies."""
    if not (0 < omega1 < omega2):
        raise ValueError("require 0 < omega1 < omega2")
    alpha = 2.0 * zeta * omega1 * omega2 / (omega1 + omega2)
    beta = 2.0 * zeta / (omega1 + omega2)
    return alpha, beta


def modal_damping(alpha: float, beta: float, omega: np.ndarray) -> np.ndarray:
    return (alpha / omega + beta * omega) / 2.0


def _vertical_shapes(vecs: np.ndarray, dof: DofMap, n_nodes: int) -> np.ndarray:
    """Expand free-DOF eigenvectors to per-node vertical components."""
    shapes = np.zeros((n_nodes, vecs.shape[1]))
    for node in range(n_nodes):
        idx = dof.free_y_index(node)
        if idx >= 0:
            shapes[node] = vecs[idx]
    return shapes


def unit_max_normalize(shapes: np.ndarray) -> np.ndarray:
    """Scale each column to unit max-abs with the dominant entry positive."""
    out = shapes.copy()
    for p in range(out.shape[1]):
        peak = np.argmax(np.abs(out[:, p]))
        out[:, p] /= out[peak, p]
    return out


def eigen(
    K: np.ndarray,
    M: np.ndarray,
    n_modes: int,
    dof: DofMap | None = None,
    n_nodes: int | None = None,
    zeta: float = DEFAULT_ZETA,
) -> ModalReference:
    """Modal reference for a constrained system.

    Without a DofMap the mode shapes are the raw free-DOF vectors (useful
    for hand-built systems in tests).
    """
    omega, vecs = eigen_raw(K, M, n_modes)
    alpha, beta = rayleigh(omega[0], omega[1], zeta) if n_modes >= 2 else (0.0, 0.0)
    if dof is not None and n_nodes is not None:
        shapes = _vertical_shapes(vecs, dof, n_nodes)
    else:
        shapes = vecs
    return ModalReference(
        frequencies_Hz=omega / (2 * np.pi),
        damping_ratios=modal_damping(alpha, beta, omega),
        mode_shapes=unit_max_normalize(shapes),
        rayleigh_alpha=alpha,
        rayleigh_beta=beta,
    )


def newmark(
    system: SystemMatrices,
    load: np.ndarray,
    dt: float,
    gamma: float = 0.5,
    beta_nm: float = 0.25,
    u0: np.ndarray | None = None,
    v0: np.ndarray | None = None,
) -> np.ndarray:
    """Average-acceleration Newmark integration (from rest by default).

    ``load`` is (n_free x T); returns free-DOF accelerations of the same
    shape.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    K, M = system.K, system.M
    C = system.C if system.C is not None else np.zeros_like(K)
    n = K.shape[0]
    u0 = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float)
    v0 = np.zeros(n) if v0 is None else np.asarray(v0, dtype=float)
    keff = K + (gamma / (beta_nm * dt)) * C + (1.0 / (beta_nm * dt * dt)) * M
    try:
        keff_inv = np.linalg.inv(keff)
        a0 = np.linalg.solve(M, load[:, 0] - C @ v0 - K @ u0)
    except np.linalg.LinAlgError as exc:
        raise MechanismError("factorization failed in Newmark setup") from exc
    return kernels.newmark_loop(
        keff_inv, M, C, K, np.ascontiguousarray(load, dtype=float),
        dt, gamma, beta_nm, u0, v0, a0,
    )


def bottom_chord_nodes(truss: TrussSpec) -> np.ndarray:
    """Nodes on the bottom boundary (y = 0)."""
    return np.flatnonzero(np.abs(truss.node_coords[:, 1]) < 1e-9)


def simulate(
    truss: TrussSpec,
    seed: int,
    n_modes: int = 6,
    n_steps: int = N_STEPS,
    dt: float = DT_S,
    force_std: float = FORCE_STD_N,
) -> tuple[TimeHistory, ModalReference]:
    """Forced-then-free response of one truss under bottom-chord white noise.

    Vertical Gaussian white-noise forces act on all free bottom-chord DOFs
    for the first half of the record and are then removed, leaving free
    decay. Returns vertical accelerations for all nodes (zeros where the
    vertical DOF is constrained) plus the modal ground truth.
    """
    system, dof = assemble(truss)
    omega, vecs = eigen_raw(system.K, system.M, n_modes)
    alpha, beta = rayleigh(omega[0], omega[1])
    system.C = alpha * system.M + beta * system.K

    cutoff = n_steps // 2
    rng = np.random.default_rng(seed)
    load = np.zeros((dof.n_free, n_steps))
    for node in bottom_chord_nodes(truss):
        idx = dof.free_y_index(node)
        if idx >= 0:
            load[idx, :cutoff] = rng.normal(0.0, force_std, cutoff)

    acc_free = newmark(system, load, dt)
    acc = np.zeros((truss.n_nodes, n_steps))
    for node in range(truss.n_nodes):
        idx = dof.free_y_index(node)
        if idx >= 0:
            acc[node] = acc_free[idx]

    reference = ModalReference(
        frequencies_Hz=omega / (2 * np.pi),
        damping_ratios=modal_damping(alpha, beta, omega),
        mode_shapes=unit_max_normalize(_vertical_shapes(vecs, dof, truss.n_nodes)),
        rayleigh_alpha=alpha,
        rayleigh_beta=beta,
    )
    history = TimeHistory(
        accelerations=acc, dt_s=dt, fs_Hz=1.0 / dt, excitation_cutoff_step=cutoff
    )
    return history, reference
