"""Canonical design domains with their feeds and pinned triangles."""

from __future__ import annotations

import dataclasses

import numpy as np

from .mesh import BasisSet, TriMesh, build_rwg, generate_plate, generate_sphere, nearest_edge
from .operators import FeedSpec, oriented_feed


@dataclasses.dataclass(frozen=True, eq=False)
class Problem:
    """Mesh, basis and feeds plus the triangles excluded from design.

    ``fixed`` marks pinned triangles (value ``fixed_values``); every other
    triangle is a design variable.
    """

    name: str
    mesh: TriMesh
    basis: BasisSet
    feeds: FeedSpec
    fixed: np.ndarray
    fixed_values: np.ndarray

    @property
    def designable(self) -> np.ndarray:
        return ~self.fixed


def _feed_pinned(name, mesh, feeds) -> Problem:
    fixed = np.zeros(mesh.num_triangles, dtype=bool)
    fixed[feeds.triangles(mesh)] = True
    return Problem(name, mesh, build_rwg(mesh), feeds, fixed, fixed.astype(float))


def plate_feed(mesh: TriMesh, L: float = 1.0, nx: int = 20) -> FeedSpec:
    """Feed on the horizontal inner edge at mid-height of the first cell column."""
    x = -0.5 * L + 0.5 * L / nx
    return FeedSpec(*zip(oriented_feed(mesh, nearest_edge(mesh, [x, 0.0, 0.0], [0, 1, 0]), [0, 1, 0])))


def plate_problem(nx: int = 20, ny: int = 12, L: float = 1.0, aspect: float = 0.6) -> Problem:
    """Rectangular plate, 3:5 by default, fed close to its left boundary."""
    mesh = generate_plate(L, aspect, nx, ny)
    return _feed_pinned(f"plate-{nx}x{ny}", mesh, plate_feed(mesh, L, nx))


def sphere_feeds(mesh: TriMesh, R: float = 1.0, phase_deg: float = 0.0) -> FeedSpec:
    """Two equatorial delta gaps at y = +-R, both driving current along +z.

    ``phase_deg`` is the phase of the second source relative to the first.
    """
    edges, volts = [], []
    for sy, v in ((1.0, 1.0), (-1.0, np.exp(1j * np.deg2rad(phase_deg)))):
        # a small x offset breaks the tie between the two edges meeting at (0, +-R, 0)
        e = nearest_edge(mesh, [1e-3 * R, sy * R, 0.0], [0, 0, 1])
        edge, volt = oriented_feed(mesh, e, [0, 0, 1], v)
        edges.append(edge)
        volts.append(volt)
    return FeedSpec(tuple(edges), tuple(volts))


def sphere_problem(subdivisions: int = 3, R: float = 1.0, phase_deg: float = 0.0) -> Problem:
    mesh = generate_sphere(subdivisions, R)
    return _feed_pinned(f"sphere-s{subdivisions}", mesh, sphere_feeds(mesh, R, phase_deg))


def dipole_problem(nx: int = 50, wavelength: float = 1.0) -> Problem:
    """Half-wave strip (width lambda/100) fed at the middle.

    The central half is pinned metal; both outer quarters are designable.
    """
    L = 0.5 * wavelength
    mesh = generate_plate(L, 0.02, nx, 1)
    feed = FeedSpec(*zip(oriented_feed(mesh, nearest_edge(mesh, [0, 0, 0], [1, 0, 0]), [1, 0, 0])))
    fixed = np.abs(mesh.centroids[:, 0]) < 0.25 * L
    return Problem(f"dipole-{nx}", mesh, build_rwg(mesh), feed, fixed, np.ones(mesh.num_triangles))


def loop_problem(nx: int = 12, ny: int = 12, aspect: float = 1.0, rim: int = 2, L: float = 1.0,
                 span: float = 0.5) -> Problem:
    """Rectangular frame ``rim`` cells wide cut from an nx x ny plate.

    The gap spans the whole width of the left side at mid-height, so no
    metal path shunts it. The pinned metal is the central ``span`` fraction
    of the left side around the gap; the rest of the frame is designable.
    With the defaults the all-metal frame is close to self-resonance at
    ka = 0.59, and the pinned part alone is a short strip dipole.
    """
    plate = generate_plate(L, aspect, nx, ny)
    dx, dy = L / nx, L * aspect / ny
    c = plate.centroids
    inner = (np.abs(c[:, 0]) < 0.5 * L - rim * dx) & (np.abs(c[:, 1]) < 0.5 * L * aspect - rim * dy)
    mesh, _ = plate.submesh(~inner)
    mesh = TriMesh(mesh.vertices, mesh.triangles)
    feed = FeedSpec(*zip(*[oriented_feed(mesh, nearest_edge(mesh, [-0.5 * L + (j + 0.5) * dx, 0, 0], [0, 1, 0]),
                                         [0, 1, 0]) for j in range(rim)]))
    cm = mesh.centroids
    fixed = (cm[:, 0] < -0.5 * L + rim * dx) & (np.abs(cm[:, 1]) < 0.5 * span * L * aspect)
    return Problem(f"loop-{nx}x{ny}-r{rim}", mesh, build_rwg(mesh), feed, fixed, np.ones(mesh.num_triangles))
