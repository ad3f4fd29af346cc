"""
mesh2d.py — Conforming triangulations with region labels and boundary tags.

Covers structured generation (unit square, L-shape), red and red-green
refinement, fixed-fraction marking, element geometry and a plain-text file
format.

Conventions:
    local edge k of a triangle is opposite vertex k and runs v_{k+1} → v_{k+2};
    global edges run from the lower to the higher vertex index;
    tri_edge_signs[t, k] = +1 when the local direction matches the global one.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

logger = logging.getLogger(__name__)

AREA_TOL = 1e-14


class MeshError(Exception):
    """Invalid mesh data or an operation that would break conformity."""


class MeshFormatError(MeshError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class BoundaryKind(IntEnum):
    DIRICHLET = 1
    NEUMANN = 2
    ROBIN = 3


class Side(IntEnum):
    """Default boundary part labels for axis-aligned domains."""
    BOTTOM = 0
    RIGHT = 1
    TOP = 2
    LEFT = 3
    INNER = 4


def _local_edge_keys(triangles: np.ndarray, base: int) -> np.ndarray:
    """(T, 3) keys low·base + high of the local edges."""
    a = triangles[:, [1, 2, 0]]
    b = triangles[:, [2, 0, 1]]
    return np.minimum(a, b) * base + np.maximum(a, b)


def _empty_int(*shape) -> np.ndarray:
    return np.zeros(shape, dtype=np.int64)


# ─── Mesh ───────────────────────────────────────────────────────────────

@dataclass(eq=False)
class Mesh:
    """
    Conforming 2D triangulation.

    Green pairs are the two children of a bisected triangle; green_parents
    stores (v0, v1, v2, m) per pair with m the midpoint of the edge opposite v0.
    parent_of maps triangles to the triangles of `parent` they lie in (-1 when
    a triangle straddles several parent triangles).
    """
    vertices: np.ndarray
    triangles: np.ndarray
    region: np.ndarray
    boundary_edges: np.ndarray
    boundary_kind: np.ndarray
    boundary_part: np.ndarray
    green_pairs: np.ndarray = field(default_factory=lambda: _empty_int(0, 2))
    green_parents: np.ndarray = field(default_factory=lambda: _empty_int(0, 4))
    parent: Optional["Mesh"] = field(default=None, repr=False)
    parent_of: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.region = np.asarray(self.region, dtype=np.int64).reshape(-1)
        b = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_edges = np.sort(b, axis=1)
        self.boundary_kind = np.asarray(self.boundary_kind, dtype=np.int64).reshape(-1)
        self.boundary_part = np.asarray(self.boundary_part, dtype=np.int64).reshape(-1)
        self.green_pairs = np.asarray(self.green_pairs, dtype=np.int64).reshape(-1, 2)
        self.green_parents = np.asarray(self.green_parents, dtype=np.int64).reshape(-1, 4)
        self._validate()

    def _validate(self):
        T = len(self.triangles)
        if len(self.region) != T:
            raise MeshError(f"{len(self.region)} region labels for {T} triangles")
        if T and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise MeshError("Triangle references a vertex that does not exist")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("Non-finite vertex coordinates")
        bad = np.flatnonzero(self.signed_areas <= AREA_TOL * max(self.scale**2, 1.0))
        if len(bad):
            raise MeshError(f"Triangle {bad[0]} is degenerate or clockwise (signed area {self.signed_areas[bad[0]]:.3e})")
        counts = self.edge_counts
        if np.any(counts > 2):
            e = int(np.flatnonzero(counts > 2)[0])
            raise MeshError(f"Edge {tuple(self.edges[e])} borders more than two triangles")
        nb = len(self.boundary_edges)
        if len(self.boundary_kind) != nb or len(self.boundary_part) != nb:
            raise MeshError("Boundary tag arrays do not match the boundary edge list")
        if nb and not np.all(np.isin(self.boundary_kind, [k.value for k in BoundaryKind])):
            raise MeshError("Unknown boundary kind")
        tagged = self.boundary_edge_ids
        open_edges = np.flatnonzero(counts == 1)
        if len(np.unique(tagged)) != nb or not np.array_equal(np.sort(tagged), open_edges):
            raise MeshError(
                f"Boundary tags cover {nb} edges but the triangulation has {len(open_edges)} "
                "boundary edges (hanging node or missing tag)"
            )

    # ─── sizes ──────────────────────────────────────────────────────────

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def scale(self) -> float:
        if not len(self.vertices):
            return 1.0
        return float(np.ptp(self.vertices, axis=0).max())

    # ─── topology ───────────────────────────────────────────────────────

    @cached_property
    def _edge_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        N = max(self.n_vertices, 1)
        keys = _local_edge_keys(self.triangles, N)
        unique, inverse, counts = np.unique(keys.ravel(), return_inverse=True, return_counts=True)
        edges = np.column_stack([unique // N, unique % N])
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """(E, 2) canonical (low, high) vertex pairs, sorted."""
        return self._edge_table[0]

    @property
    def tri_edges(self) -> np.ndarray:
        """(T, 3) global edge index of each local edge."""
        return self._edge_table[1]

    @property
    def edge_counts(self) -> np.ndarray:
        return self._edge_table[2]

    @cached_property
    def tri_edge_signs(self) -> np.ndarray:
        a = self.triangles[:, [1, 2, 0]]
        b = self.triangles[:, [2, 0, 1]]
        return np.where(a < b, 1.0, -1.0)

    @cached_property
    def edge_triangles(self) -> np.ndarray:
        """(E, 2) adjacent triangles, second entry -1 on the boundary."""
        flat = self.tri_edges.ravel()
        owner = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(flat, kind="stable")
        _, first = np.unique(flat[order], return_index=True)
        result = np.full((self.n_edges, 2), -1, dtype=np.int64)
        result[:, 0] = owner[order[first]]
        two = self.edge_counts == 2
        result[two, 1] = owner[order[first[two] + 1]]
        return result

    @cached_property
    def boundary_edge_ids(self) -> np.ndarray:
        """Global edge index of each entry of boundary_edges."""
        if not len(self.boundary_edges):
            return _empty_int(0)
        N = max(self.n_vertices, 1)
        all_keys = self.edges[:, 0] * N + self.edges[:, 1]
        keys = self.boundary_edges[:, 0] * N + self.boundary_edges[:, 1]
        pos = np.clip(np.searchsorted(all_keys, keys), 0, max(len(all_keys) - 1, 0))
        if len(all_keys) == 0 or np.any(all_keys[pos] != keys):
            raise MeshError("Boundary tag on a pair of vertices that is not a mesh edge")
        return pos

    def edges_of_kind(self, *kinds: BoundaryKind) -> np.ndarray:
        """Global edge indices of boundary edges with one of the given kinds."""
        mask = np.isin(self.boundary_kind, [int(k) for k in kinds])
        return self.boundary_edge_ids[mask]

    def vertices_of_kind(self, *kinds: BoundaryKind) -> np.ndarray:
        """Vertices incident to a boundary edge of one of the given kinds."""
        mask = np.isin(self.boundary_kind, [int(k) for k in kinds])
        return np.unique(self.boundary_edges[mask].ravel())

    # ─── geometry ───────────────────────────────────────────────────────

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def edge_midpoints(self) -> np.ndarray:
        return self.vertices[self.edges].mean(axis=1)

    @cached_property
    def geometry(self) -> "Geometry":
        return _compute_geometry(self)

    def detach_parent(self) -> "Mesh":
        """Forget the link to the coarser mesh so it can be freed; returns self."""
        self.parent = None
        self.parent_of = None
        return self


@dataclass
class Geometry:
    areas: np.ndarray              # (T,)
    edge_lengths: np.ndarray       # (E,)
    edge_tangents: np.ndarray      # (E, 2) unit, low → high
    edge_normals: np.ndarray       # (E, 2) unit, (t_y, -t_x)
    boundary_normals: np.ndarray   # (B, 2) outward unit, aligned with mesh.boundary_edges
    grad_lambda: np.ndarray        # (T, 3, 2)


def _compute_geometry(mesh: Mesh) -> Geometry:
    areas = mesh.signed_areas
    if np.any(areas <= 0.0):
        raise MeshError("Degenerate triangle in geometry evaluation")
    p = mesh.vertices[mesh.triangles]
    # ∇λ_k = (y_{k+1} - y_{k+2}, x_{k+2} - x_{k+1}) / (2|T|)
    p1 = p[:, [1, 2, 0]]
    p2 = p[:, [2, 0, 1]]
    grad = np.stack([p1[..., 1] - p2[..., 1], p2[..., 0] - p1[..., 0]], axis=-1)
    grad /= (2.0 * areas)[:, None, None]

    vec = mesh.vertices[mesh.edges[:, 1]] - mesh.vertices[mesh.edges[:, 0]]
    lengths = np.linalg.norm(vec, axis=1)
    tangents = vec / lengths[:, None]
    normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])

    boundary_normals = np.zeros((len(mesh.boundary_edges), 2))
    if len(mesh.boundary_edges):
        eid = mesh.boundary_edge_ids
        tri = mesh.edge_triangles[eid, 0]
        k = np.argmax(mesh.tri_edges[tri] == eid[:, None], axis=1)
        sign = mesh.tri_edge_signs[tri, k]
        boundary_normals = normals[eid] * sign[:, None]
    return Geometry(
        areas=areas,
        edge_lengths=lengths,
        edge_tangents=tangents,
        edge_normals=normals,
        boundary_normals=boundary_normals,
        grad_lambda=grad,
    )


def geometry(mesh: Mesh) -> Geometry:
    """Element areas, edge lengths, outward boundary normals and ∇λ per triangle."""
    return mesh.geometry


# ─── Structured meshes ──────────────────────────────────────────────────

RegionFn = Callable[[np.ndarray], np.ndarray]
BoundaryFn = Callable[[np.ndarray], np.ndarray]


def side_of(points: np.ndarray, lower=(0.0, 0.0), upper=(1.0, 1.0), tol: float = 1e-12) -> np.ndarray:
    """Side label of boundary points of an axis-aligned box, INNER elsewhere."""
    x, y = points[:, 0], points[:, 1]
    side = np.full(len(points), int(Side.INNER), dtype=np.int64)
    side[np.abs(x - lower[0]) < tol] = Side.LEFT
    side[np.abs(x - upper[0]) < tol] = Side.RIGHT
    side[np.abs(y - upper[1]) < tol] = Side.TOP
    side[np.abs(y - lower[1]) < tol] = Side.BOTTOM
    return side


def _boundary_of(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    N = len(vertices)
    keys, counts = np.unique(_local_edge_keys(triangles, N).ravel(), return_counts=True)
    open_keys = keys[counts == 1]
    return np.column_stack([open_keys // N, open_keys % N])


def _assemble_structured(
    nx: int,
    ny: int,
    diagonal: str,
    keep_cell: np.ndarray,
    region_fn: Optional[RegionFn],
    boundary_fn: Optional[BoundaryFn],
) -> Mesh:
    if diagonal not in ("main", "anti"):
        raise MeshError(f"Unknown diagonal orientation: {diagonal}")
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.nonzero(keep_cell)
    a = j * (nx + 1) + i
    b = a + 1
    c = a + nx + 2
    d = a + nx + 1
    if diagonal == "main":
        first, second = np.column_stack([a, b, c]), np.column_stack([a, c, d])
    else:
        first, second = np.column_stack([a, b, d]), np.column_stack([b, c, d])
    triangles = np.stack([first, second], axis=1).reshape(-1, 3)

    used = np.unique(triangles)
    renumber = np.full(len(vertices), -1, dtype=np.int64)
    renumber[used] = np.arange(len(used))
    vertices = vertices[used]
    triangles = renumber[triangles]

    centroids = vertices[triangles].mean(axis=1)
    region = np.zeros(len(triangles), dtype=np.int64) if region_fn is None else np.asarray(region_fn(centroids), dtype=np.int64)

    boundary = _boundary_of(vertices, triangles)
    midpoints = vertices[boundary].mean(axis=1)
    if boundary_fn is None:
        kinds = np.full(len(boundary), int(BoundaryKind.DIRICHLET), dtype=np.int64)
    else:
        kinds = np.asarray(boundary_fn(midpoints), dtype=np.int64)
    parts = side_of(midpoints)
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        region=region,
        boundary_edges=boundary,
        boundary_kind=kinds,
        boundary_part=parts,
    )


def rect_structured(
    nx: int,
    ny: int,
    diagonal: str = "main",
    region_fn: Optional[RegionFn] = None,
    boundary_fn: Optional[BoundaryFn] = None,
) -> Mesh:
    """
    Structured triangulation of the unit square with 2·nx·ny triangles.

    Args:
        nx, ny: cells per direction
        diagonal: "main" splits cells along x₁ = x₂ direction, "anti" along the other
        region_fn: centroids (T, 2) → region labels
        boundary_fn: edge midpoints (B, 2) → BoundaryKind values (default Dirichlet)
    """
    if nx < 1 or ny < 1:
        raise MeshError(f"Need at least one cell per direction, got {nx}×{ny}")
    keep = np.ones((ny, nx), dtype=bool)
    return _assemble_structured(nx, ny, diagonal, keep, region_fn, boundary_fn)


def lshape_structured(
    n: int,
    diagonal: str = "main",
    region_fn: Optional[RegionFn] = None,
    boundary_fn: Optional[BoundaryFn] = None,
) -> Mesh:
    """Structured triangulation of (0,1)² ∖ ([½,1]×[0,½]) on an n×n grid."""
    if n < 2 or n % 2:
        raise MeshError(f"L-shape grid size must be even and at least 2, got {n}")
    jj, ii = np.mgrid[0:n, 0:n]
    keep = ~((ii >= n // 2) & (jj < n // 2))
    return _assemble_structured(n, n, diagonal, keep, region_fn, boundary_fn)


# ─── Marking ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class MarkedSet:
    indices: np.ndarray

    @classmethod
    def of(cls, indices: Iterable[int], n_triangles: int) -> "MarkedSet":
        idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices, dtype=np.int64).reshape(-1)
        if len(idx) and (idx.min() < 0 or idx.max() >= n_triangles):
            raise MeshError(f"Marked index out of range for {n_triangles} triangles")
        unique = np.unique(idx)
        if len(unique) != len(idx):
            raise MeshError("Marked set contains duplicates")
        return cls(indices=unique)

    def __len__(self) -> int:
        return len(self.indices)


def mark_fixed_fraction(values, fraction: float) -> MarkedSet:
    """
    Mark the ceil(fraction·T) elements with the largest values.

    Ties are broken by ascending element index.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"Marking fraction must lie in (0, 1], got {fraction}")
    if not np.all(np.isfinite(values)) or np.any(values < 0.0):
        raise ValueError("Marking values must be finite and nonnegative")
    count = math.ceil(round(fraction * len(values), 9))
    order = np.lexsort((np.arange(len(values)), -values))
    return MarkedSet(indices=np.sort(order[:count]))


# ─── Refinement ─────────────────────────────────────────────────────────

def _split_triangles(
    mesh: Mesh,
    coarse: np.ndarray,
    coarse_region: np.ndarray,
    origin: np.ndarray,
    green_source: np.ndarray,
    split_edges: np.ndarray,
    known_edges: np.ndarray,
    known_mid: np.ndarray,
    vertices: Optional[np.ndarray] = None,
    added_parents: Optional[np.ndarray] = None,
) -> Mesh:
    """
    Emit children of `coarse` for a closed set of split edges.

    origin[c] is the input triangle coarse triangle c came from (-1 for a
    dissolved green parent); green_source[c] the green pair it replaced.
    `vertices` may extend mesh.vertices with midpoints placed ahead of the
    split, added_parents[j] being the edge halved by vertex n_vertices + j.
    """
    verts = mesh.vertices if vertices is None else vertices
    added_parents = _empty_int(0, 2) if added_parents is None else added_parents
    n_in = len(verts)
    base = n_in + len(split_edges) + 1

    split_keys = np.unique(split_edges[:, 0] * base + split_edges[:, 1])
    known_keys = known_edges[:, 0] * base + known_edges[:, 1]
    order = np.argsort(known_keys)
    known_keys, known_mid = known_keys[order], known_mid[order]

    mid = np.empty(len(split_keys), dtype=np.int64)
    known = np.isin(split_keys, known_keys)
    if np.any(known):
        mid[known] = known_mid[np.searchsorted(known_keys, split_keys[known])]
    new_keys = split_keys[~known]
    mid[~known] = n_in + np.arange(len(new_keys))
    new_parents = np.column_stack([new_keys // base, new_keys % base])
    vertices = np.vstack([verts, 0.5 * (verts[new_parents[:, 0]] + verts[new_parents[:, 1]])])

    keys = _local_edge_keys(coarse, base)
    if len(split_keys):
        pos = np.clip(np.searchsorted(split_keys, keys), 0, len(split_keys) - 1)
        is_split = split_keys[pos] == keys
        m = np.where(is_split, mid[pos], -1)
    else:
        is_split = np.zeros(keys.shape, dtype=bool)
        m = np.full(keys.shape, -1, dtype=np.int64)
    count = is_split.sum(axis=1)
    if np.any(count == 2):
        raise MeshError("Refinement closure left a triangle with exactly two split edges")

    n_children = np.choose(count, [1, 2, 2, 4])
    offsets = np.concatenate([[0], np.cumsum(n_children)[:-1]]).astype(np.int64)
    total = int(n_children.sum())
    triangles = np.empty((total, 3), dtype=np.int64)
    region = np.repeat(coarse_region, n_children)
    parent_of = np.empty(total, dtype=np.int64)

    c0 = np.flatnonzero(count == 0)
    triangles[offsets[c0]] = coarse[c0]
    parent_of[offsets[c0]] = origin[c0]

    c1 = np.flatnonzero(count == 1)
    k = np.argmax(is_split[c1], axis=1)
    rows = np.arange(len(c1))
    v = coarse[c1]
    vk, vk1, vk2 = v[rows, k], v[rows, (k + 1) % 3], v[rows, (k + 2) % 3]
    mk = m[c1, k]
    off = offsets[c1]
    triangles[off] = np.column_stack([vk, vk1, mk])
    triangles[off + 1] = np.column_stack([vk, mk, vk2])
    first, second = origin[c1].copy(), origin[c1].copy()
    source = green_source[c1]
    restored = source >= 0
    if np.any(restored):
        # an untouched green pair comes back unchanged
        first[restored] = mesh.green_pairs[source[restored], 0]
        second[restored] = mesh.green_pairs[source[restored], 1]
    parent_of[off] = first
    parent_of[off + 1] = second
    green_pairs = np.column_stack([off, off + 1])
    green_parents = np.column_stack([vk, vk1, vk2, mk])

    c3 = np.flatnonzero(count == 3)
    v = coarse[c3]
    v0, v1, v2 = v[:, 0], v[:, 1], v[:, 2]
    m0, m1, m2 = m[c3, 0], m[c3, 1], m[c3, 2]
    off = offsets[c3]
    triangles[off] = np.column_stack([v0, m2, m1])
    triangles[off + 1] = np.column_stack([m2, v1, m0])
    triangles[off + 2] = np.column_stack([m1, m0, v2])
    triangles[off + 3] = np.column_stack([m0, m1, m2])
    for j in range(4):
        parent_of[off + j] = origin[c3]

    boundary, kinds, parts = _inherit_boundary(mesh, vertices, triangles, np.vstack([added_parents, new_parents]))
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        region=region,
        boundary_edges=boundary,
        boundary_kind=kinds,
        boundary_part=parts,
        green_pairs=green_pairs,
        green_parents=green_parents,
        parent=mesh,
        parent_of=parent_of,
    )


def _inherit_boundary(mesh: Mesh, vertices: np.ndarray, triangles: np.ndarray, parents: np.ndarray):
    """
    Boundary edges of the refined mesh with tags copied from the edges they halve.

    parents[j] is the edge halved by vertex mesh.n_vertices + j; a midpoint
    always has a lower-numbered parent pair, so walking up ends on old edges.
    """
    N_old = mesh.n_vertices
    base = len(vertices)
    boundary = _boundary_of(vertices, triangles)
    old = mesh.boundary_edges
    old_keys = old[:, 0] * base + old[:, 1]
    order = np.argsort(old_keys)
    old_keys = old_keys[order]

    lookup = boundary.copy()
    while True:
        rows = np.flatnonzero(lookup[:, 1] >= N_old)
        if not len(rows):
            break
        halved = parents[lookup[rows, 1] - N_old]
        other = lookup[rows, 0]
        if np.any((halved[:, 0] != other) & (halved[:, 1] != other)):
            raise MeshError("Boundary edge does not halve an edge of the coarser mesh")
        lookup[rows] = np.sort(halved, axis=1)
    keys = lookup[:, 0] * base + lookup[:, 1]
    pos = np.clip(np.searchsorted(old_keys, keys), 0, max(len(old_keys) - 1, 0))
    if len(old_keys) == 0 or np.any(old_keys[pos] != keys):
        raise MeshError("Refined boundary edge has no tagged ancestor")
    src = order[pos]
    return boundary, mesh.boundary_kind[src], mesh.boundary_part[src]


def uniform_refine(mesh: Mesh) -> Mesh:
    """Red refinement of every triangle; the result carries no green state."""
    T = mesh.n_triangles
    refined = _split_triangles(
        mesh,
        coarse=mesh.triangles,
        coarse_region=mesh.region,
        origin=np.arange(T),
        green_source=np.full(T, -1, dtype=np.int64),
        split_edges=mesh.edges,
        known_edges=_empty_int(0, 2),
        known_mid=_empty_int(0),
    )
    logger.debug(f"Uniform refinement {T} → {refined.n_triangles} triangles")
    return refined


def _edge_key(a: np.ndarray, b: np.ndarray, base: int) -> np.ndarray:
    return np.minimum(a, b) * base + np.maximum(a, b)


def _close_split(keys: np.ndarray, split: np.ndarray) -> np.ndarray:
    """Grow the split set until every triangle has zero, one or three split edges."""
    while True:
        red = np.isin(keys, split).sum(axis=1) >= 2
        grown = np.union1d(split, keys[red].ravel())
        if len(grown) == len(split):
            return split
        split = grown


def refine_marked(mesh: Mesh, marked) -> Mesh:
    """
    Red refinement of the marked triangles with green closure.

    Every green pair is first dissolved into its parent with the old midpoint
    kept as a split edge. Triangles with two or more split edges turn red until
    the split set is closed, so green children are never bisected again.
    A dissolved parent whose half-edge gets split by a neighbour is replaced
    by its four red children ahead of the split, and the closure is redone
    until no parent is left in that state.
    """
    if not isinstance(marked, MarkedSet):
        marked = MarkedSet.of(marked, mesh.n_triangles)
    if len(marked) == 0:
        return mesh

    T = mesh.n_triangles
    N = mesh.n_vertices
    G = len(mesh.green_pairs)
    gp = mesh.green_parents
    is_green = np.zeros(T, dtype=bool)
    is_green[mesh.green_pairs.ravel()] = True
    kept = np.flatnonzero(~is_green)

    coarse = np.vstack([mesh.triangles[kept], gp[:, :3]])
    coarse_region = np.concatenate([mesh.region[kept], mesh.region[mesh.green_pairs[:, 0]]])
    origin = np.concatenate([kept, np.full(G, -1, dtype=np.int64)])
    green_source = np.concatenate([np.full(len(kept), -1, dtype=np.int64), np.arange(G)])
    alive = np.ones(len(coarse), dtype=bool)

    coarse_of = np.empty(T, dtype=np.int64)
    coarse_of[kept] = np.arange(len(kept))
    coarse_of[mesh.green_pairs[:, 0]] = len(kept) + np.arange(G)
    coarse_of[mesh.green_pairs[:, 1]] = len(kept) + np.arange(G)
    marked_coarse = np.unique(coarse_of[marked.indices])

    # two new midpoints at most per green parent
    base = N + 2 * G + 1
    v0, v1, v2, m = gp.T
    seed = _edge_key(v1, v2, base)
    halves = np.column_stack([_edge_key(v1, m, base), _edge_key(m, v2, base)])
    known = {int(k): int(v) for k, v in zip(seed, m)}
    added: list[tuple[int, int]] = []
    dissolved = np.ones(G, dtype=bool)

    def midpoint(a: int, b: int) -> int:
        key = min(a, b) * base + max(a, b)
        if key not in known:
            known[key] = N + len(added)
            added.append((min(a, b), max(a, b)))
        return known[key]

    split = np.union1d(seed, _local_edge_keys(coarse[marked_coarse], base).ravel())
    while True:
        split = _close_split(_local_edge_keys(coarse[alive], base), split)
        hit = np.flatnonzero(dissolved & np.isin(halves, split).any(axis=1))
        if not len(hit):
            break
        children = []
        for g in hit:
            a, b, c, mid_bc = (int(v) for v in gp[g])
            mid_ab, mid_ca = midpoint(a, b), midpoint(c, a)
            children += [(a, mid_ab, mid_ca), (mid_ab, b, mid_bc), (mid_ca, mid_bc, c), (mid_bc, mid_ca, mid_ab)]
            split = np.union1d(split, [_edge_key(a, b, base), _edge_key(c, a, base)])
        dissolved[hit] = False
        alive[len(kept) + hit] = False
        coarse = np.vstack([coarse, np.asarray(children, dtype=np.int64)])
        coarse_region = np.concatenate([coarse_region, np.repeat(mesh.region[mesh.green_pairs[hit, 0]], 4)])
        origin = np.concatenate([origin, np.full(4 * len(hit), -1, dtype=np.int64)])
        green_source = np.concatenate([green_source, np.full(4 * len(hit), -1, dtype=np.int64)])
        alive = np.concatenate([alive, np.ones(4 * len(hit), dtype=bool)])
        logger.debug(f"Pre-splitting {len(hit)} green parents with a refined half-edge")

    added_parents = np.asarray(added, dtype=np.int64).reshape(-1, 2)
    vertices = mesh.vertices
    if len(added):
        vertices = np.vstack([vertices, mesh.vertices[added_parents].mean(axis=1)])
    known_keys = np.fromiter(known.keys(), dtype=np.int64, count=len(known))
    known_mid = np.fromiter(known.values(), dtype=np.int64, count=len(known))
    refined = _split_triangles(
        mesh,
        coarse[alive],
        coarse_region[alive],
        origin[alive],
        green_source[alive],
        split_edges=np.column_stack([split // base, split % base]),
        known_edges=np.column_stack([known_keys // base, known_keys % base]),
        known_mid=known_mid,
        vertices=vertices,
        added_parents=added_parents,
    )
    logger.debug(
        f"Refined {len(marked)} marked of {T} triangles → {refined.n_triangles} "
        f"({len(refined.green_pairs)} green pairs)"
    )
    return refined


def ancestor_index(fine: Mesh, coarse: Mesh) -> np.ndarray:
    """For each triangle of `fine`, the triangle of ancestor `coarse` containing it."""
    index = np.arange(fine.n_triangles)
    current = fine
    while current is not coarse:
        if current.parent is None or current.parent_of is None:
            raise MeshError("Mesh is not a refinement of the requested ancestor")
        index = current.parent_of[index]
        if np.any(index < 0):
            raise MeshError("Refinement step dissolved a green pair; no single ancestor triangle")
        current = current.parent
    return index


# ─── Plain-text format ──────────────────────────────────────────────────

SECTIONS = ("VERTICES", "TRIANGLES", "BOUNDARY")


def format_mesh(mesh: Mesh) -> str:
    """
    Serialize a mesh:

        VERTICES <n>        x y
        TRIANGLES <t>       v0 v1 v2 region
        BOUNDARY <b>        a b KIND part

    Lines starting with '#' and blank lines are ignored on input.
    """
    lines = [f"VERTICES {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"TRIANGLES {mesh.n_triangles}")
    lines += [f"{a} {b} {c} {r}" for (a, b, c), r in zip(mesh.triangles.tolist(), mesh.region.tolist())]
    lines.append(f"BOUNDARY {len(mesh.boundary_edges)}")
    lines += [
        f"{a} {b} {BoundaryKind(k).name} {p}"
        for (a, b), k, p in zip(mesh.boundary_edges.tolist(), mesh.boundary_kind.tolist(), mesh.boundary_part.tolist())
    ]
    return "\n".join(lines) + "\n"


def parse_mesh(text: str) -> Mesh:
    """Parse the plain-text format; errors name the offending line."""
    data = {name: [] for name in SECTIONS}
    expected = {}
    current = None
    last_line = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        last_line = line_no
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0].isalpha() and tokens[0].isupper():
            if tokens[0] not in SECTIONS:
                raise MeshFormatError(f"unknown section header '{tokens[0]}'", line_no)
            if len(tokens) != 2 or not tokens[1].isdigit():
                raise MeshFormatError(f"section header must be '{tokens[0]} <count>'", line_no)
            current = tokens[0]
            expected[current] = (int(tokens[1]), line_no)
            continue
        if current is None:
            raise MeshFormatError("data before the first section header", line_no)
        try:
            if current == "VERTICES":
                if len(tokens) != 2:
                    raise ValueError("expected 2 coordinates")
                data[current].append((float(tokens[0]), float(tokens[1])))
            elif current == "TRIANGLES":
                if len(tokens) != 4:
                    raise ValueError("expected 3 vertex indices and a region label")
                data[current].append(tuple(int(t) for t in tokens))
            else:
                if len(tokens) != 4:
                    raise ValueError("expected 2 vertex indices, a kind and a part label")
                kind = BoundaryKind[tokens[2].upper()]
                data[current].append((int(tokens[0]), int(tokens[1]), int(kind), int(tokens[3])))
        except (ValueError, KeyError) as e:
            raise MeshFormatError(f"bad {current.lower()} entry '{line}': {e}", line_no) from e

    for name in SECTIONS:
        if name not in expected:
            raise MeshFormatError(f"missing section {name}", last_line)
        count, header_line = expected[name]
        if count != len(data[name]):
            raise MeshFormatError(f"section {name} announces {count} entries, found {len(data[name])}", header_line)

    tris = np.array(data["TRIANGLES"], dtype=np.int64).reshape(-1, 4)
    bnd = np.array(data["BOUNDARY"], dtype=np.int64).reshape(-1, 4)
    return Mesh(
        vertices=np.array(data["VERTICES"], dtype=float).reshape(-1, 2),
        triangles=tris[:, :3],
        region=tris[:, 3],
        boundary_edges=bnd[:, :2],
        boundary_kind=bnd[:, 2],
        boundary_part=bnd[:, 3],
    )


def write_mesh(mesh: Mesh, path) -> Path:
    path = Path(path)
    path.write_text(format_mesh(mesh))
    logger.info(f"Wrote mesh with {mesh.n_triangles} triangles to {path}")
    return path


def read_mesh(path) -> Mesh:
    return parse_mesh(Path(path).read_text())
