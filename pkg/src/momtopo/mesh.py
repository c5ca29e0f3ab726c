"""Triangulated design domains and RWG connectivity.

Two canonical generators are provided: a structured rectangular plate whose
cells are split into four triangles through the cell center, and a geodesic
icosphere. Meshes are immutable once built.
"""

from __future__ import annotations

import dataclasses
import hashlib
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree


class MeshError(ValueError):
    """Raised for structurally invalid meshes."""


@dataclasses.dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangulated surface.

    Attributes:
      vertices: (V, 3) vertex coordinates in meters.
      triangles: (T, 3) vertex indices, counter-clockwise about the normal.
      a: radius of the circumscribing sphere. Computed from the vertices
        (max distance from the bounding-box center) when not given.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    a: float = None

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (V, 3)")
        if triangles.ndim != 2 or triangles.shape[1] != 3 or len(triangles) == 0:
            raise MeshError("triangles must have shape (T, 3) with T >= 1")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise MeshError("triangle references a missing vertex")
        vertices.flags.writeable = False
        triangles.flags.writeable = False
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        if self.a is None:
            center = 0.5 * (vertices.min(axis=0) + vertices.max(axis=0))
            a = float(np.max(np.linalg.norm(vertices - center, axis=1)))
            object.__setattr__(self, "a", a)
        small = 1e-12 * self.a**2
        bad = np.flatnonzero(self.areas <= small)
        if len(bad):
            raise MeshError(f"degenerate triangle {bad[0]} (area {self.areas[bad[0]]:.3e})")

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def corners(self) -> np.ndarray:
        """(T, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    @cached_property
    def _normal_raw(self) -> np.ndarray:
        c = self.corners
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._normal_raw, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        return self._normal_raw / (2.0 * self.areas[:, None])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def _connectivity(self):
        tri = self.triangles
        # local edge i is opposite local vertex i
        pairs = np.stack([tri[:, [1, 2]], tri[:, [2, 0]], tri[:, [0, 1]]], axis=1)
        keys = np.sort(pairs.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        tri_edges = inverse.reshape(-1, 3)
        order = np.argsort(inverse, kind="stable")
        owner = order // 3
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        edge_tris[:, 0] = owner[starts]
        two = counts >= 2
        edge_tris[two, 1] = owner[starts[two] + 1]
        return edges, tri_edges, edge_tris, counts

    @property
    def edges(self) -> np.ndarray:
        """(E, 2) sorted vertex pairs, lexicographically ordered."""
        return self._connectivity[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """(T, 3) edge index of the edge opposite each local vertex."""
        return self._connectivity[1]

    @property
    def edge_triangles(self) -> np.ndarray:
        """(E, 2) adjacent triangles, second entry -1 on boundary edges."""
        return self._connectivity[2]

    @property
    def edge_counts(self) -> np.ndarray:
        return self._connectivity[3]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        v = self.vertices[self.edges]
        return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_counts == 1)

    @property
    def num_boundary_edges(self) -> int:
        return int(np.sum(self.edge_counts == 1))

    @property
    def is_closed(self) -> bool:
        return self.num_boundary_edges == 0

    def euler_characteristic(self) -> int:
        return self.num_vertices - len(self.edges) + self.num_triangles

    @cached_property
    def digest(self) -> str:
        """SHA-256 of the geometry, stable across processes."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.triangles, dtype="<i8").tobytes())
        return h.hexdigest()

    def submesh(self, keep: np.ndarray) -> tuple["TriMesh", np.ndarray]:
        """Mesh made of the triangles flagged in ``keep``.

        Returns the new mesh and the indices of the kept triangles. Unused
        vertices are dropped; ``a`` is inherited so electrical sizes match.
        """
        keep = np.asarray(keep)
        idx = np.flatnonzero(keep) if keep.dtype == bool else np.asarray(keep, dtype=np.int64)
        tri = self.triangles[idx]
        used, inv = np.unique(tri, return_inverse=True)
        sub = TriMesh(self.vertices[used], inv.reshape(-1, 3), a=self.a)
        return sub, idx


@dataclasses.dataclass(frozen=True, eq=False)
class BasisSet:
    """RWG basis functions, one per inner edge.

    The plus triangle of each function is the adjacent triangle with the lower
    index; positive coefficients carry current from the plus into the minus
    triangle across the edge.
    """

    edge: np.ndarray          # (N,) edge index
    plus: np.ndarray          # (N,) plus triangle
    minus: np.ndarray         # (N,) minus triangle
    length: np.ndarray        # (N,) edge length
    free_plus: np.ndarray     # (N,) vertex of the plus triangle opposite the edge
    free_minus: np.ndarray    # (N,) vertex of the minus triangle opposite the edge
    tri_basis: np.ndarray     # (T, 3) basis index on local edge, -1 if boundary
    tri_sign: np.ndarray      # (T, 3) +1 plus / -1 minus / 0 boundary
    edge_basis: np.ndarray    # (E,) basis index of each edge, -1 if boundary

    @property
    def N(self) -> int:
        return len(self.edge)

    def __len__(self) -> int:
        return len(self.edge)


def build_rwg(mesh: TriMesh) -> BasisSet:
    if np.any(mesh.edge_counts > 2):
        bad = int(np.flatnonzero(mesh.edge_counts > 2)[0])
        raise MeshError(f"non-manifold edge {bad} shared by {mesh.edge_counts[bad]} triangles")
    inner = np.flatnonzero(mesh.edge_counts == 2)
    et = mesh.edge_triangles[inner]
    plus = et.min(axis=1)
    minus = et.max(axis=1)
    n = len(inner)
    edge_basis = np.full(len(mesh.edges), -1, dtype=np.int64)
    edge_basis[inner] = np.arange(n)

    te = mesh.triangle_edges
    tri_basis = edge_basis[te]
    tri_sign = np.zeros_like(tri_basis)
    has = tri_basis >= 0
    tri_ids = np.broadcast_to(np.arange(mesh.num_triangles)[:, None], te.shape)
    tri_sign[has] = np.where(plus[tri_basis[has]] == tri_ids[has], 1, -1)

    def free_vertex(tris):
        local = np.argmax(te[tris] == inner[:, None], axis=1)
        return mesh.triangles[tris, local]

    return BasisSet(
        edge=inner,
        plus=plus,
        minus=minus,
        length=mesh.edge_lengths[inner],
        free_plus=free_vertex(plus),
        free_minus=free_vertex(minus),
        tri_basis=tri_basis,
        tri_sign=tri_sign,
        edge_basis=edge_basis,
    )


def generate_plate(L: float = 1.0, aspect: float = 0.6, nx: int = 40, ny: int = 24) -> TriMesh:
    """Planar L x (aspect*L) plate in the xy-plane, centered at the origin.

    Every rectangular cell is split into four triangles through its center,
    giving ``T = 4*nx*ny``.
    """
    if not (L > 0 and aspect > 0):
        raise MeshError("plate dimensions must be positive")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError("nx and ny must be integers >= 1")
    nx, ny = int(nx), int(ny)
    W = aspect * L
    xs = np.linspace(-L / 2, L / 2, nx + 1)
    ys = np.linspace(-W / 2, W / 2, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    grid = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    mx, my = np.meshgrid(cx, cy, indexing="ij")
    centers = np.column_stack([mx.ravel(), my.ravel(), np.zeros(mx.size)])
    vertices = np.vstack([grid, centers])

    def g(i, j):
        return i * (ny + 1) + j

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    c = (nx + 1) * (ny + 1) + i * ny + j
    v00, v10, v11, v01 = g(i, j), g(i + 1, j), g(i + 1, j + 1), g(i, j + 1)
    tris = np.stack(
        [
            np.column_stack([c, v00, v10]),
            np.column_stack([c, v10, v11]),
            np.column_stack([c, v11, v01]),
            np.column_stack([c, v01, v00]),
        ],
        axis=1,
    ).reshape(-1, 3)
    a = 0.5 * np.hypot(L, W)
    return TriMesh(vertices, tris, a=a)


def _icosahedron():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def generate_sphere(subdivisions: int = 2, R: float = 1.0) -> TriMesh:
    """Geodesic sphere from a recursively subdivided icosahedron, T = 20*4**s."""
    if int(subdivisions) != subdivisions or subdivisions < 0:
        raise MeshError("subdivisions must be an integer >= 0")
    if not R > 0:
        raise MeshError("radius must be positive")
    verts, faces = _icosahedron()
    verts = list(verts)
    for _ in range(int(subdivisions)):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = np.array(new)
    return TriMesh(R * np.array(verts), faces, a=float(R))


def neighborhoods(mesh: TriMesh, Rmin: float) -> list[np.ndarray]:
    """Sorted index sets {j : |r_t - r_j| <= Rmin} over triangle centroids."""
    if Rmin < 0:
        raise ValueError("Rmin must be non-negative")
    tree = cKDTree(mesh.centroids)
    hoods = tree.query_ball_point(mesh.centroids, r=Rmin)
    return [np.array(sorted(set(h) | {t}), dtype=np.int64) for t, h in enumerate(hoods)]


def nearest_edge(mesh: TriMesh, point, direction=None, inner_only: bool = True) -> int:
    """Index of the edge whose midpoint is closest to ``point``.

    With ``direction`` given, only edges whose crossing current would flow
    roughly along it (edge nearly perpendicular to ``direction``) are
    considered.
    """
    v = mesh.vertices[mesh.edges]
    mid = v.mean(axis=1)
    cand = np.ones(len(mid), dtype=bool)
    if inner_only:
        cand &= mesh.edge_counts == 2
    if direction is not None:
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        t = v[:, 1] - v[:, 0]
        t /= np.linalg.norm(t, axis=1, keepdims=True)
        cos = np.abs(t @ d)
        cand &= cos <= cos[cand].min() + 1e-9
    dist = np.linalg.norm(mid - np.asarray(point, dtype=float), axis=1)
    dist[~cand] = np.inf
    return int(np.argmin(dist))
