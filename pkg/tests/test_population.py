import numpy as np
import pytest
from scipy.spatial import Delaunay

from modalpop import population
from modalpop.population import (
    MIN_TRIANGLE_ANGLE_DEG,
    MeshError,
    TrapezoidSpec,
    TrussSpec,
    delaunay_mesh,
    generate_population,
    is_connected,
    sample_material,
)


def test_trapezoid_validation():
    with pytest.raises(ValueError):
        TrapezoidSpec(span_m=10.0, top_span_m=12.0)
    with pytest.raises(ValueError):
        TrapezoidSpec(height_m=-1.0)
    with pytest.raises(ValueError):
        TrapezoidSpec(n_boundary_points=3)


def test_contains_corners_and_outside():
    b = TrapezoidSpec()
    assert b.contains(b.corners).all()
    outside = np.array([[-1.0, 0.0], [0.0, b.height_m + 1.0], [1.0, b.height_m]])
    assert not b.contains(outside).any()


def test_mesh_is_deterministic():
    b = TrapezoidSpec()
    t1 = delaunay_mesh(b, seed=7)
    t2 = delaunay_mesh(b, seed=7)
    np.testing.assert_array_equal(t1.node_coords, t2.node_coords)
    np.testing.assert_array_equal(t1.edges, t2.edges)


def test_mesh_quality_and_connectivity():
    b = TrapezoidSpec()
    for seed in range(5):
        t = delaunay_mesh(b, seed=seed)
        assert is_connected(t.n_nodes, t.edges)
        # every node participates in at least two members
        counts = np.bincount(t.edges.ravel(), minlength=t.n_nodes)
        assert counts.min() >= 2
        tri = Delaunay(t.node_coords)
        angle = population._min_triangle_angle_deg(t.node_coords, tri.simplices)
        assert angle >= MIN_TRIANGLE_ANGLE_DEG


def test_node_ordering_sorted_in_x():
    t = delaunay_mesh(TrapezoidSpec(), seed=3)
    x = t.node_coords[:, 0]
    assert (np.diff(x) >= -1e-12).all()


def test_material_sampling_range():
    values = [sample_material(s) for s in range(200)]
    assert min(values) >= 100e9
    assert max(values) <= 300e9
    # spread over the range, not clustered
    assert np.std(values) > 20e9


def test_generate_population_supports_and_materials():
    trusses = generate_population(5, seed=1)
    assert len(trusses) == 5
    ids = {t.population_id for t in trusses}
    assert len(ids) == 5
    for t in trusses:
        supports = {n: (fx, fy) for n, fx, fy in t.supports}
        assert len(supports) == 2
        coords = t.node_coords
        for node, (fx, fy) in supports.items():
            assert abs(coords[node, 1]) < 1e-9  # bottom chord
            assert fy
        assert sorted(fx for fx, _ in supports.values()) == [False, True]
    # independent seeds give different geometries
    assert not np.array_equal(trusses[0].node_coords, trusses[1].node_coords)


def test_generate_population_deterministic():
    a = generate_population(3, seed=9)
    b = generate_population(3, seed=9)
    for ta, tb in zip(a, b):
        np.testing.assert_array_equal(ta.node_coords, tb.node_coords)
        assert ta.youngs_modulus_Pa == tb.youngs_modulus_Pa


def test_trussspec_validation_catches_disconnection():
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    edges = np.array([[0, 1], [2, 3]])
    with pytest.raises(ValueError):
        TrussSpec(
            node_coords=coords,
            edges=edges,
            supports=[(0, True, True), (3, False, True)],
            youngs_modulus_Pa=200e9,
        ).validate()


def test_impossible_boundary_raises_mesherror():
    # far too many interior points for the minimum spacing to fit
    bad = TrapezoidSpec(span_m=2.0, top_span_m=1.0, height_m=0.2,
                        n_interior_points=400)
    with pytest.raises(MeshError):
        delaunay_mesh(bad, seed=0)
