import numpy as np
import pytest

from modalpop import fem, graphdata, population, sensing
from modalpop.graphdata import (
    AttributedGraph,
    DataFormatError,
    load,
    read_manifest,
    reference_audit,
    save,
    split,
)


@pytest.fixture(scope="module")
def graphs():
    trusses = population.generate_population(3, seed=8)
    out = []
    for i, t in enumerate(trusses):
        history, reference = fem.simulate(t, seed=i, n_steps=128)
        ss = sensing.sense(t, history.accelerations, history.fs_Hz)
        out.append(
            AttributedGraph(
                truss=t,
                signals=ss,
                reference=reference,
                raw_accelerations=history.accelerations,
                fs_Hz=history.fs_Hz,
            )
        )
    split(out, (0.34, 0.33, 0.33), seed=0)
    return out


def test_round_trip_bit_exact(tmp_path, graphs):
    path = tmp_path / "pop.mpd"
    save(graphs, path, seed=8)
    loaded = load(path)
    assert len(loaded) == len(graphs)
    for a, b in zip(graphs, loaded):
        assert a.graph_id == b.graph_id
        assert a.split_tag == b.split_tag
        np.testing.assert_array_equal(a.truss.node_coords, b.truss.node_coords)
        np.testing.assert_array_equal(a.truss.edges, b.truss.edges)
        assert a.truss.supports == b.truss.supports
        assert a.truss.youngs_modulus_Pa == b.truss.youngs_modulus_Pa
        np.testing.assert_array_equal(a.signals.signals, b.signals.signals)
        np.testing.assert_array_equal(a.signals.mask, b.signals.mask)
        assert a.signals.normalization_scale == b.signals.normalization_scale
        np.testing.assert_array_equal(a.raw_accelerations, b.raw_accelerations)
        np.testing.assert_array_equal(
            a._reference.frequencies_Hz, b._reference.frequencies_Hz
        )
        np.testing.assert_array_equal(
            a._reference.mode_shapes, b._reference.mode_shapes
        )
        assert a._reference.rayleigh_alpha == b._reference.rayleigh_alpha


def test_save_load_idempotent_bytes(tmp_path, graphs):
    p1, p2 = tmp_path / "a.mpd", tmp_path / "b.mpd"
    save(graphs, p1, seed=8)
    save(load(p1), p2, seed=8)
    assert p1.read_bytes() == p2.read_bytes()


def test_manifest_contents(tmp_path, graphs):
    path = tmp_path / "pop.mpd"
    save(graphs, path, seed=8)
    header = read_manifest(path)
    assert header["schema_version"] == 1
    assert header["seed"] == 8
    assert len(header["graphs"]) == 3
    counts = header["split_counts"]
    assert sum(counts.values()) == 3
    for entry in header["graphs"]:
        assert "sha256" in entry and len(entry["sha256"]) == 64
        assert "ref/mode_shapes" in entry["arrays"]


def test_corruption_detected(tmp_path, graphs):
    path = tmp_path / "pop.mpd"
    save(graphs, path, seed=8)
    raw = bytearray(path.read_bytes())
    raw[-5] ^= 0xFF  # flip a bit in the last graph's payload
    path.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError, match="checksum"):
        load(path)


def test_truncation_detected(tmp_path, graphs):
    path = tmp_path / "pop.mpd"
    save(graphs, path, seed=8)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 200])
    with pytest.raises(DataFormatError):
        load(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.mpd"
    path.write_bytes(b"NOT-A-DATASET\n" + b"\x00" * 64)
    with pytest.raises(DataFormatError, match="not a modalpop dataset"):
        read_manifest(path)


def test_split_100_into_80_5_15():
    trusses = [
        AttributedGraph(
            truss=population.TrussSpec(
                node_coords=np.zeros((2, 2)),
                edges=np.array([[0, 1]]),
                population_id=f"g{i}",
            )
        )
        for i in range(100)
    ]
    split(trusses, (0.80, 0.05, 0.15), seed=1)
    tags = [g.split_tag for g in trusses]
    assert tags.count("train") == 80
    assert tags.count("validation") == 5
    assert tags.count("test") == 15


def test_split_deterministic_and_seed_sensitive():
    def make():
        return [
            AttributedGraph(
                truss=population.TrussSpec(
                    node_coords=np.zeros((2, 2)),
                    edges=np.array([[0, 1]]),
                    population_id=f"g{i}",
                )
            )
            for i in range(20)
        ]

    a, b, c = make(), make(), make()
    split(a, seed=5)
    split(b, seed=5)
    split(c, seed=6)
    assert [g.split_tag for g in a] == [g.split_tag for g in b]
    assert [g.split_tag for g in a] != [g.split_tag for g in c]


def test_split_rejects_empty_nonzero_fraction():
    graphs = [
        AttributedGraph(
            truss=population.TrussSpec(
                node_coords=np.zeros((2, 2)), edges=np.array([[0, 1]])
            )
        )
        for _ in range(3)
    ]
    with pytest.raises(ValueError):
        split(graphs, (0.9, 0.05, 0.05), seed=0)


def test_reference_audit_records_access(graphs):
    g = graphs[0]
    with reference_audit() as accesses:
        assert accesses == []
        _ = g.reference
        assert accesses == [g.graph_id]
    # outside the context nothing is recorded
    _ = g.reference
    with reference_audit() as accesses:
        assert accesses == []
