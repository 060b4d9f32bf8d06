import numpy as np
import pytest

from modalpop import fem, population
from modalpop.fem import (
    MechanismError,
    SystemMatrices,
    assemble,
    bottom_chord_nodes,
    build_dofmap,
    eigen,
    eigen_raw,
    modal_damping,
    newmark,
    rayleigh,
    simulate,
    unit_max_normalize,
)
from modalpop.population import TrussSpec


def two_bar_truss(E=200e9, A=0.5, rho=8015.0):
    """Two bars meeting at a free apex node; both base nodes fully fixed.

    Bar 1 along x, bar 2 along y, so the free node's stiffness decouples:
    kx = EA/L1, ky = EA/L2 exactly.
    """
    coords = np.array([[0.0, 0.0], [2.0, 1.0], [2.0, 4.0]])
    edges = np.array([[0, 1], [1, 2]])
    coords = np.array([[0.0, 1.0], [2.0, 1.0], [2.0, 4.0]])
    truss = TrussSpec(
        node_coords=coords,
        edges=edges,
        supports=[(0, True, True), (2, True, True)],
        youngs_modulus_Pa=E,
        density_kg_m3=rho,
        area_m2=A,
    )
    return truss


def test_dofmap_indexing():
    truss = two_bar_truss()
    dof = build_dofmap(truss)
    assert dof.n_free == 2
    assert list(dof.free_dofs) == [2, 3]
    assert dof.free_y_index(1) == 1
    assert dof.free_y_index(0) == -1


def test_two_dof_eigen_matches_closed_form():
    """Axes-aligned bars decouple; frequencies follow from 2x2 K and M."""
    E, A, rho = 200e9, 0.5, 8015.0
    truss = two_bar_truss(E, A, rho)
    system, dof = assemble(truss)
    l1, l2 = 2.0, 3.0
    kx, ky = E * A / l1, E * A / l2
    # consistent mass: diagonal 2*rho*A*L/6 per bar at the shared node,
    # for both x and y of that node
    m_diag = 2 * rho * A * (l1 + l2) / 6.0
    K_exact = np.diag([kx, ky])
    M_exact = np.diag([m_diag, m_diag])
    np.testing.assert_allclose(system.K, K_exact, rtol=1e-12)
    np.testing.assert_allclose(system.M, M_exact, rtol=1e-12)
    omega, vecs = eigen_raw(system.K, system.M, 2)
    expected = np.sort(np.sqrt(np.array([kx, ky]) / m_diag))
    np.testing.assert_allclose(omega, expected, rtol=1e-9)


def test_assemble_rejects_mechanism():
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    edges = np.array([[0, 1], [1, 2]])  # collinear chain: free vertical motion
    truss = TrussSpec(
        node_coords=coords,
        edges=edges,
        supports=[(0, True, True), (2, False, True)],
    )
    with pytest.raises(MechanismError):
        assemble(truss)


def test_rayleigh_coefficients_closed_form():
    w1, w2 = 2 * np.pi * 2.0, 2 * np.pi * 5.0
    alpha, beta = rayleigh(w1, w2, zeta=0.01)
    np.testing.assert_allclose(alpha, 2 * 0.01 * w1 * w2 / (w1 + w2), rtol=1e-14)
    np.testing.assert_allclose(beta, 2 * 0.01 / (w1 + w2), rtol=1e-14)
    zetas = modal_damping(alpha, beta, np.array([w1, w2]))
    np.testing.assert_allclose(zetas, 0.01, atol=1e-15)
    # damping exceeds the target away from the anchor frequencies
    assert modal_damping(alpha, beta, np.array([4 * w2]))[0] > 0.01


def test_rayleigh_rejects_bad_order():
    with pytest.raises(ValueError):
        rayleigh(10.0, 10.0)


def test_unit_max_normalize():
    shapes = np.array([[0.5, -2.0], [-1.0, 1.0]])
    out = unit_max_normalize(shapes)
    assert np.max(np.abs(out), axis=0) == pytest.approx([1.0, 1.0])
    peaks = np.argmax(np.abs(out), axis=0)
    assert all(out[p, c] == 1.0 for c, p in enumerate(peaks))


def sdof_system(m=2.0, k=800.0, zeta=0.02):
    c = 2 * zeta * np.sqrt(k * m)
    return SystemMatrices(
        K=np.array([[k]]), M=np.array([[m]]), C=np.array([[c]])
    ), np.sqrt(k / m), zeta


def _sdof_free_decay_exact(wn, zeta, t):
    """u, v, a for free decay from u(0)=0, v(0)=1."""
    sigma = zeta * wn
    wd = wn * np.sqrt(1 - zeta**2)
    env = np.exp(-sigma * t)
    u = env * np.sin(wd * t) / wd
    v = env * (np.cos(wd * t) - sigma * np.sin(wd * t) / wd)
    a = -2 * sigma * v - wn**2 * u
    return u, v, a


def test_newmark_sdof_free_decay_matches_analytic():
    """Free decay from v0 = 1 versus the damped-cosine solution.

    Newmark's period elongation grows as (wn*dt)^2 and the phase error
    accumulates linearly in time, so the 1e-3 tolerance is checked on a
    low-frequency oscillator over a few cycles.
    """
    system, wn, zeta = sdof_system(m=2.0, k=50.0, zeta=0.02)  # fn ~ 0.8 Hz
    dt, T = 0.005, 600  # 3 s
    acc = newmark(system, np.zeros((1, T)), dt, v0=np.array([1.0]))[0]
    t = np.arange(T) * dt
    _, _, a_exact = _sdof_free_decay_exact(wn, zeta, t)
    rel = np.linalg.norm(acc - a_exact) / np.linalg.norm(a_exact)
    assert rel < 1e-3


def test_newmark_second_order_convergence():
    system, wn, zeta = sdof_system()
    errors = []
    for dt in (0.005, 0.0025):
        T = int(round(4.0 / dt))
        acc = newmark(system, np.zeros((1, T)), dt, v0=np.array([1.0]))[0]
        t = np.arange(T) * dt
        _, _, a_exact = _sdof_free_decay_exact(wn, zeta, t)
        rel = np.linalg.norm(acc - a_exact) / np.linalg.norm(a_exact)
        errors.append(rel)
    assert errors[1] < errors[0] / 3.0  # ~4x for a second-order method


def test_newmark_energy_decay_without_forcing():
    """Displacement envelope can only shrink for a damped unforced system."""
    system, wn, zeta = sdof_system(zeta=0.05)
    T = 2000
    acc = newmark(system, np.zeros((1, T)), 0.005, v0=np.array([1.0]))[0]
    window = int(2 * np.pi / wn / 0.005)
    env = [np.abs(acc[i : i + window]).max() for i in range(0, T - window, window)]
    assert all(b <= a * 1.001 for a, b in zip(env, env[1:]))


def test_newmark_rejects_bad_dt():
    system, _, _ = sdof_system()
    with pytest.raises(ValueError):
        newmark(system, np.zeros((1, 10)), 0.0)


@pytest.fixture(scope="module")
def small_truss():
    return population.generate_population(1, seed=5)[0]


def test_simulate_shapes_and_cutoff(small_truss):
    history, reference = simulate(small_truss, seed=0, n_steps=400)
    n = small_truss.n_nodes
    assert history.accelerations.shape == (n, 400)
    assert history.excitation_cutoff_step == 200
    assert history.fs_Hz == pytest.approx(200.0)
    # free decay after cutoff: response amplitude shrinks
    amp_forced = np.abs(history.accelerations[:, 150:200]).max()
    amp_late = np.abs(history.accelerations[:, 380:]).max()
    assert amp_late < amp_forced
    assert len(reference.frequencies_Hz) == 6
    assert (np.diff(reference.frequencies_Hz) > 0).all()
    np.testing.assert_allclose(reference.damping_ratios[:2], 0.01, atol=1e-10)


def test_simulate_deterministic(small_truss):
    h1, _ = simulate(small_truss, seed=11, n_steps=200)
    h2, _ = simulate(small_truss, seed=11, n_steps=200)
    np.testing.assert_array_equal(h1.accelerations, h2.accelerations)


def test_bottom_chord_nodes(small_truss):
    nodes = bottom_chord_nodes(small_truss)
    assert len(nodes) >= 2
    assert np.allclose(small_truss.node_coords[nodes, 1], 0.0)


def test_constrained_nodes_have_zero_vertical_response(small_truss):
    history, _ = simulate(small_truss, seed=2, n_steps=200)
    for node, fx, fy in small_truss.supports:
        if fy:
            assert np.all(history.accelerations[node] == 0.0)


def test_eigen_frequencies_scale_with_stiffness(small_truss):
    """f ~ sqrt(E): doubling E raises every frequency by sqrt(2)."""
    system, dof = assemble(small_truss)
    ref1 = eigen(system.K, system.M, 4, dof, small_truss.n_nodes)
    stiff = TrussSpec(
        node_coords=small_truss.node_coords,
        edges=small_truss.edges,
        supports=small_truss.supports,
        youngs_modulus_Pa=2 * small_truss.youngs_modulus_Pa,
        density_kg_m3=small_truss.density_kg_m3,
        area_m2=small_truss.area_m2,
    )
    system2, dof2 = assemble(stiff)
    ref2 = eigen(system2.K, system2.M, 4, dof2, stiff.n_nodes)
    np.testing.assert_allclose(
        ref2.frequencies_Hz / ref1.frequencies_Hz, np.sqrt(2.0), rtol=1e-9
    )


def test_population_frequency_band():
    """Population fundamental frequencies sit in the low single digits Hz."""
    trusses = population.generate_population(5, seed=21)
    f1, f4 = [], []
    for t in trusses:
        system, dof = assemble(t)
        omega, _ = eigen_raw(system.K, system.M, 4)
        f = omega / (2 * np.pi)
        f1.append(f[0])
        f4.append(f[3])
    assert 1.0 < min(f1) and max(f1) < 5.0
    assert max(f4) < 25.0
