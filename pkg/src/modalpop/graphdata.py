"""Attributed-graph dataset container with manifest and checksums.

File layout (documented format, version 1):

* magic line ``MODALPOP-DATASET v1\\n``
* 8-byte little-endian unsigned length of the JSON header
* UTF-8 JSON header: schema version, population seed, boundary, split
  counts, and one entry per graph listing its arrays (name, shape, dtype,
  byte offset into the body) and a SHA-256 checksum of the graph's payload
* binary body: for each array, an 8-byte little-endian length prefix
  followed by raw little-endian float64 (or int64) values

Ground-truth modal reference arrays are stored under a separate ``ref/``
name prefix and surfaced through an access-audited property so tests can
prove unsupervised training never reads them.
"""

import contextlib
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .fem import ModalReference
from .population import TrapezoidSpec, TrussSpec
from .sensing import SignalSet

MAGIC = b"MODALPOP-DATASET v1\n"
SCHEMA_VERSION = 1
DEFAULT_FRACTIONS = (0.80, 0.05, 0.15)
SPLITS = ("train", "validation", "test")


class DataFormatError(RuntimeError):
    """Raised on checksum, version, or layout mismatches while loading."""


_reference_audit: dict = {"enabled": False, "accesses": []}


@contextlib.contextmanager
def reference_audit():
    """Record every ground-truth reference access made inside the block."""
    _reference_audit["enabled"] = True
    _reference_audit["accesses"] = []
    try:
        yield _reference_audit["accesses"]
    finally:
        _reference_audit["enabled"] = False


class AttributedGraph:
    """One population member: truss, signals, and held-out modal reference."""

    def __init__(
        self,
        truss: TrussSpec,
        signals: SignalSet | None = None,
        reference: ModalReference | None = None,
        split_tag: str = "train",
        raw_accelerations: np.ndarray | None = None,
        fs_Hz: float = 200.0,
    ):
        self.truss = truss
        self.signals = signals
        self._reference = reference
        self.split_tag = split_tag
        self.raw_accelerations = raw_accelerations
        self.fs_Hz = fs_Hz

    @property
    def graph_id(self) -> str:
        return self.truss.population_id

    @property
    def reference(self) -> ModalReference | None:
        if _reference_audit["enabled"]:
            _reference_audit["accesses"].append(self.graph_id)
        return self._reference


@dataclass
class DatasetManifest:
    schema_version: int
    seed: int
    boundary: dict
    split_counts: dict
    graph_ids: list = field(default_factory=list)


def split(
    graphs: list,
    fractions: tuple = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> list:
    """Tag graphs with train/validation/test splits (deterministic in seed)."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    n = len(graphs)
    counts = [int(np.floor(f * n)) for f in fractions]
    rem = n - sum(counts)
    order = np.argsort([f * n - c for f, c in zip(fractions, counts)])[::-1]
    for idx in order[:rem]:
        counts[idx] += 1
    for f, c in zip(fractions, counts):
        if f > 0 and c == 0:
            raise ValueError("nonzero fraction produced an empty split")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    tags = np.empty(n, dtype=object)
    start = 0
    for tag, c in zip(SPLITS, counts):
        tags[perm[start : start + c]] = tag
        start += c
    for g, tag in zip(graphs, tags):
        g.split_tag = tag
    return graphs


def _graph_arrays(g: AttributedGraph) -> dict:
    truss = g.truss
    arrays = {
        "node_coords": np.asarray(truss.node_coords, dtype=np.float64),
        "edges": np.asarray(truss.edges, dtype=np.int64),
        "supports": np.asarray(
            [[n, int(fx), int(fy)] for n, fx, fy in truss.supports], dtype=np.int64
        ),
    }
    if g.raw_accelerations is not None:
        arrays["raw_accelerations"] = np.asarray(g.raw_accelerations, np.float64)
    if g.signals is not None:
        arrays["signals"] = np.asarray(g.signals.signals, np.float64)
        arrays["mask"] = g.signals.mask.astype(np.int64)
    ref = g._reference
    if ref is not None:
        arrays["ref/frequencies_Hz"] = np.asarray(ref.frequencies_Hz, np.float64)
        arrays["ref/damping_ratios"] = np.asarray(ref.damping_ratios, np.float64)
        arrays["ref/mode_shapes"] = np.asarray(ref.mode_shapes, np.float64)
    return arrays


def _graph_meta(g: AttributedGraph) -> dict:
    meta = {
        "id": g.graph_id,
        "split": g.split_tag,
        "n_nodes": g.truss.n_nodes,
        "youngs_modulus_Pa": g.truss.youngs_modulus_Pa,
        "density_kg_m3": g.truss.density_kg_m3,
        "area_m2": g.truss.area_m2,
        "fs_Hz": g.fs_Hz,
    }
    if g.signals is not None:
        meta["normalization_scale"] = g.signals.normalization_scale
        meta["signals_fs_Hz"] = g.signals.fs_Hz
    if g._reference is not None:
        meta["rayleigh_alpha"] = g._reference.rayleigh_alpha
        meta["rayleigh_beta"] = g._reference.rayleigh_beta
    return meta


def save(
    graphs: list,
    path,
    seed: int = 0,
    boundary: TrapezoidSpec | None = None,
) -> DatasetManifest:
    """Write a population container; returns its manifest."""
    split_counts = {s: 0 for s in SPLITS}
    for g in graphs:
        split_counts[g.split_tag] += 1

    body = bytearray()
    entries = []
    for g in graphs:
        arrays = _graph_arrays(g)
        digest = hashlib.sha256()
        arr_meta = {}
        for name, arr in arrays.items():
            raw = np.ascontiguousarray(arr).astype(
                arr.dtype.newbyteorder("<"), copy=False
            ).tobytes()
            arr_meta[name] = {
                "shape": list(arr.shape),
                "dtype": str(arr.dtype),
                "offset": len(body),
            }
            body += struct.pack("<Q", len(raw))
            body += raw
            digest.update(raw)
        entry = _graph_meta(g)
        entry["arrays"] = arr_meta
        entry["sha256"] = digest.hexdigest()
        entries.append(entry)

    header = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "boundary": asdict(boundary) if boundary else None,
        "split_counts": split_counts,
        "graphs": entries,
    }
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(bytes(body))
    return DatasetManifest(
        schema_version=SCHEMA_VERSION,
        seed=seed,
        boundary=asdict(boundary) if boundary else {},
        split_counts=split_counts,
        graph_ids=[g.graph_id for g in graphs],
    )


def read_manifest(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise DataFormatError("not a modalpop dataset or unsupported version")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
    if header.get("schema_version") != SCHEMA_VERSION:
        raise DataFormatError(f"unsupported schema version {header.get('schema_version')}")
    return header


def load(path) -> list:
    """Load all graphs, verifying per-graph checksums."""
    header = read_manifest(path)
    with open(path, "rb") as fh:
        fh.seek(len(MAGIC))
        (hlen,) = struct.unpack("<Q", fh.read(8))
        fh.seek(hlen, 1)
        body = fh.read()

    graphs = []
    for entry in header["graphs"]:
        digest = hashlib.sha256()
        arrays = {}
        for name, meta in entry["arrays"].items():
            off = meta["offset"]
            if off + 8 > len(body):
                raise DataFormatError(f"truncated file at graph {entry['id']}")
            (nbytes,) = struct.unpack("<Q", body[off : off + 8])
            raw = body[off + 8 : off + 8 + nbytes]
            if len(raw) != nbytes:
                raise DataFormatError(f"truncated file at graph {entry['id']}")
            digest.update(raw)
            arrays[name] = np.frombuffer(raw, dtype=np.dtype(meta["dtype"])).reshape(
                meta["shape"]
            ).copy()
        if digest.hexdigest() != entry["sha256"]:
            raise DataFormatError(f"checksum mismatch for graph {entry['id']}")

        truss = TrussSpec(
            node_coords=arrays["node_coords"],
            edges=arrays["edges"],
            supports=[(int(n), bool(fx), bool(fy)) for n, fx, fy in arrays["supports"]],
            youngs_modulus_Pa=entry["youngs_modulus_Pa"],
            density_kg_m3=entry["density_kg_m3"],
            area_m2=entry["area_m2"],
            population_id=entry["id"],
        )
        signals = None
        if "signals" in arrays:
            signals = SignalSet(
                signals=arrays["signals"],
                mask=arrays["mask"].astype(bool),
                fs_Hz=entry.get("signals_fs_Hz", entry["fs_Hz"]),
                normalization_scale=entry.get("normalization_scale", 1.0),
            )
        reference = None
        if "ref/frequencies_Hz" in arrays:
            reference = ModalReference(
                frequencies_Hz=arrays["ref/frequencies_Hz"],
                damping_ratios=arrays["ref/damping_ratios"],
                mode_shapes=arrays["ref/mode_shapes"],
                rayleigh_alpha=entry.get("rayleigh_alpha", 0.0),
                rayleigh_beta=entry.get("rayleigh_beta", 0.0),
            )
        graphs.append(
            AttributedGraph(
                truss=truss,
                signals=signals,
                reference=reference,
                split_tag=entry["split"],
                raw_accelerations=arrays.get("raw_accelerations"),
                fs_Hz=entry["fs_Hz"],
            )
        )
    return graphs
