"""Random generation of a heterogeneous population of planar trusses.

Each member is a simply-supported truss obtained by Delaunay triangulation
of random points in a trapezoidal boundary, with Young's modulus drawn
uniformly from 100-300 GPa. Density and cross-section area are fixed for
the whole population.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import Delaunay

DENSITY_KG_M3 = 8015.0
AREA_M2 = 0.5
E_MIN_PA = 100e9
E_MAX_PA = 300e9

MIN_TRIANGLE_ANGLE_DEG = 15.0
MIN_POINT_SPACING_FRACTION = 0.04  # of span; 0.8 m at a 20 m span
MAX_MESH_ATTEMPTS = 40


class MeshError(RuntimeError):
    """Raised when no acceptable mesh can be generated for a boundary."""


@dataclass(frozen=True)
class TrapezoidSpec:
    """Trapezoidal boundary for truss generation (symmetric about mid-span)."""

    span_m: float = 100.0
    top_span_m: float = 60.0
    height_m: float = 15.0
    n_interior_points: int = 14
    n_boundary_points: int = 14

    def __post_init__(self):
        if not (self.span_m > self.top_span_m > 0):
            raise ValueError("require span_m > top_span_m > 0")
        if self.height_m <= 0:
            raise ValueError("height_m must be positive")
        if self.n_interior_points < 0 or self.n_boundary_points < 4:
            raise ValueError("need >= 4 boundary points and >= 0 interior points")

    @property
    def corners(self) -> np.ndarray:
        off = 0.5 * (self.span_m - self.top_span_m)
        return np.array(
            [
                [0.0, 0.0],
                [self.span_m, 0.0],
                [off + self.top_span_m, self.height_m],
                [off, self.height_m],
            ]
        )

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized point-in-trapezoid test (boundary inclusive)."""
        x, y = pts[:, 0], pts[:, 1]
        off = 0.5 * (self.span_m - self.top_span_m)
        inside = (y >= 0) & (y <= self.height_m)
        frac = y / self.height_m
        inside &= x >= frac * off - 1e-12
        inside &= x <= self.span_m - frac * off + 1e-12
        return inside


@dataclass
class TrussSpec:
    """Geometry, connectivity, supports, and material of one truss."""

    node_coords: np.ndarray  # (N, 2) meters
    edges: np.ndarray  # (E, 2) int node indices, i < j
    supports: list = field(default_factory=list)  # (node, fix_x, fix_y)
    youngs_modulus_Pa: float = 200e9
    density_kg_m3: float = DENSITY_KG_M3
    area_m2: float = AREA_M2
    population_id: str = ""

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes))
        a[self.edges[:, 0], self.edges[:, 1]] = 1.0
        a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def validate(self) -> None:
        n = self.n_nodes
        e = np.asarray(self.edges)
        if e.min() < 0 or e.max() >= n:
            raise ValueError("edge references invalid node index")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-edge present")
        keys = {tuple(sorted(pair)) for pair in e.tolist()}
        if len(keys) != len(e):
            raise ValueError("duplicate edges present")
        if not is_connected(n, e):
            raise ValueError("truss graph is not connected")
        fx = sum(1 for _, fix_x, _ in self.supports if fix_x)
        fy = sum(1 for _, _, fix_y in self.supports if fix_y)
        if fx < 1 or fy < 2:
            raise ValueError("insufficient supports for a stable planar truss")
        if not (E_MIN_PA <= self.youngs_modulus_Pa <= E_MAX_PA):
            raise ValueError("Young's modulus outside the population range")


def is_connected(n_nodes: int, edges: np.ndarray) -> bool:
    """Breadth-first reachability over the undirected edge list."""
    adj = [[] for _ in range(n_nodes)]
    for i, j in np.asarray(edges):
        adj[int(i)].append(int(j))
        adj[int(j)].append(int(i))
    seen = np.zeros(n_nodes, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return bool(seen.all())


def _boundary_points(boundary: TrapezoidSpec) -> np.ndarray:
    """Corners plus extra points spread along the four edges by length."""
    corners = boundary.corners
    extra = boundary.n_boundary_points - 4
    # edge order: bottom, right slant, top, left slant
    edges = [(0, 1), (1, 2), (2, 3), (3, 0)]
    lengths = np.array(
        [np.linalg.norm(corners[b] - corners[a]) for a, b in edges]
    )
    shares = lengths / lengths.sum() * extra
    counts = np.floor(shares).astype(int)
    rem = extra - counts.sum()
    for idx in np.argsort(shares - counts)[::-1][:rem]:
        counts[idx] += 1
    pts = [corners]
    for (a, b), cnt in zip(edges, counts):
        if cnt > 0:
            frac = np.linspace(0, 1, cnt + 2)[1:-1, None]
            pts.append(corners[a] + frac * (corners[b] - corners[a]))
    return np.vstack(pts)


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def _sample_interior(boundary: TrapezoidSpec, fixed: np.ndarray, rng) -> np.ndarray:
    """Rejection-sample interior points with a minimum pairwise distance.

    Points also keep a margin from the boundary edges; slivers between an
    interior point and two adjacent edge points would otherwise defeat the
    minimum-angle criterion.
    """
    corners = boundary.corners
    edge_segs = [(corners[k], corners[(k + 1) % 4]) for k in range(4)]
    min_spacing = MIN_POINT_SPACING_FRACTION * boundary.span_m
    edge_margin = min(0.2 * boundary.height_m, min_spacing)
    pts = []
    tries = 0
    while len(pts) < boundary.n_interior_points and tries < 4000:
        tries += 1
        cand = np.array(
            [
                rng.uniform(0, boundary.span_m),
                rng.uniform(0, boundary.height_m),
            ]
        )
        if not boundary.contains(cand[None, :])[0]:
            continue
        if min(_segment_distance(cand, a, b) for a, b in edge_segs) < edge_margin:
            continue
        all_pts = np.vstack([fixed] + pts) if pts else fixed
        if np.min(np.linalg.norm(all_pts - cand, axis=1)) < min_spacing:
            continue
        pts.append(cand[None, :])
    if len(pts) < boundary.n_interior_points:
        raise MeshError("could not place interior points at the required spacing")
    return np.vstack(pts) if pts else np.empty((0, 2))


def _min_triangle_angle_deg(coords: np.ndarray, simplices: np.ndarray) -> float:
    tri = coords[simplices]  # (n_tri, 3, 2)
    angles = []
    for k in range(3):
        a = tri[:, k]
        b = tri[:, (k + 1) % 3]
        c = tri[:, (k + 2) % 3]
        u, v = b - a, c - a
        cosang = np.sum(u * v, axis=1) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        )
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
    return float(np.min(angles))


def delaunay_mesh(boundary: TrapezoidSpec, seed: int) -> TrussSpec:
    """Mesh the trapezoid, rejecting meshes with sliver triangles.

    Returns a geometry-only TrussSpec (no supports or material randomization).
    Nodes are sorted by (x, y) so that index order follows the span.
    """
    rng = np.random.default_rng(seed)
    fixed = _boundary_points(boundary)
    last_angle = None
    for _ in range(MAX_MESH_ATTEMPTS):
        if boundary.n_interior_points > 0:
            interior = _sample_interior(boundary, fixed, rng)
            coords = np.vstack([fixed, interior])
        else:
            coords = fixed
        tri = Delaunay(coords)
        last_angle = _min_triangle_angle_deg(coords, tri.simplices)
        if last_angle < MIN_TRIANGLE_ANGLE_DEG:
            if boundary.n_interior_points == 0:
                break  # nothing to resample
            continue
        order = np.lexsort((coords[:, 1], coords[:, 0]))
        inv = np.empty_like(order)
        inv[order] = np.arange(len(order))
        coords = coords[order]
        edge_set = set()
        for simplex in tri.simplices:
            s = inv[simplex]
            for a, b in ((s[0], s[1]), (s[1], s[2]), (s[0], s[2])):
                edge_set.add((min(a, b), max(a, b)))
        edges = np.array(sorted(edge_set), dtype=np.int64)
        return TrussSpec(node_coords=coords, edges=edges)
    raise MeshError(
        f"no mesh met the {MIN_TRIANGLE_ANGLE_DEG} deg minimum angle "
        f"(last attempt: {last_angle:.2f} deg)"
    )


def sample_material(rng_seed: int) -> float:
    """Uniform Young's modulus draw in [100, 300] GPa."""
    rng = np.random.default_rng(rng_seed)
    return float(rng.uniform(E_MIN_PA, E_MAX_PA))


def _attach_supports(truss: TrussSpec, boundary: TrapezoidSpec) -> None:
    """Pin the bottom-left corner and roller the bottom-right corner."""
    coords = truss.node_coords
    bl = int(np.argmin(coords[:, 0] + 1e6 * coords[:, 1]))
    d_bl = np.linalg.norm(coords[bl] - [0.0, 0.0])
    br = int(np.argmax(coords[:, 0] - 1e6 * coords[:, 1]))
    d_br = np.linalg.norm(coords[br] - [boundary.span_m, 0.0])
    if d_bl > 1e-9 or d_br > 1e-9:
        raise MeshError("bottom corner nodes missing from mesh")
    truss.supports = [(bl, True, True), (br, False, True)]


def generate_population(
    count: int, boundary: TrapezoidSpec | None = None, seed: int = 0
) -> list[TrussSpec]:
    """Generate ``count`` independent simply-supported trusses.

    The interior point count is drawn per member (10-18 by default) so the
    population is heterogeneous in both topology and material.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    boundary = boundary or TrapezoidSpec()
    ss = np.random.SeedSequence(seed)
    trusses = []
    for i, child in enumerate(ss.spawn(count)):
        rng = np.random.default_rng(child)
        n_interior = int(rng.integers(10, 19))
        member_boundary = replace(boundary, n_interior_points=n_interior)
        mesh_seed = int(rng.integers(0, 2**31 - 1))
        truss = delaunay_mesh(member_boundary, mesh_seed)
        truss.youngs_modulus_Pa = sample_material(int(rng.integers(0, 2**31 - 1)))
        truss.population_id = f"truss-{i:03d}"
        _attach_supports(truss, boundary)
        truss.validate()
        trusses.append(truss)
    return trusses
