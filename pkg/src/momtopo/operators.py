"""Method-of-moments operators for RWG currents on triangulated surfaces.

The vacuum impedance matrix uses the mixed-potential EFIE with Galerkin
testing and the e^{jwt} time convention, so that ``Z0 = R0 + 1j*X0`` with
``R0`` the radiation part. The static 1/R part of the Green function is
integrated in closed form over the source triangle for near pairs; the
radiation part has a smooth kernel and is integrated separately with one
rule for all pairs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .mesh import BasisSet, TriMesh
from .quadrature import map_points, static_potentials, triangle_rule

log = logging.getLogger(__name__)

ETA0 = 376.730313668
C0 = 299792458.0
_FOUR_PI = 4.0 * np.pi


class AssemblyError(RuntimeError):
    pass


@dataclasses.dataclass(frozen=True)
class QuadratureOrder:
    """Polynomial degrees of the triangle rules used during assembly.

    ``far`` is used on both triangles of well separated pairs, ``near`` for
    pairs whose centroids are closer than ``near_factor`` times the mean
    edge length, and ``radiation`` for the smooth radiation kernel on all
    pairs. The near rule integrates the analytic static potential over the
    test triangle; that potential has log-singular gradients at the triangle
    edges, so the 7-point rule leaves about 1% error on self terms.
    """

    far: int = 2
    near: int = 10
    near_factor: float = 2.0
    radiation: int = 5

    def doubled(self) -> "QuadratureOrder":
        return QuadratureOrder(2 * self.far, 2 * self.near, self.near_factor, 2 * self.radiation)

    @property
    def tag(self) -> str:
        return f"{self.far}-{self.near}-{self.near_factor:g}-{self.radiation}"


@dataclasses.dataclass(frozen=True)
class FeedSpec:
    """Delta-gap feeds placed on inner edges."""

    edges: tuple[int, ...]
    voltages: tuple[complex, ...] = None

    def __post_init__(self):
        edges = tuple(int(e) for e in np.atleast_1d(self.edges))
        volts = self.voltages
        if volts is None:
            volts = (1.0,) * len(edges)
        volts = tuple(complex(v) for v in np.atleast_1d(volts))
        if len(volts) != len(edges):
            raise ValueError("one voltage per feed edge is required")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "voltages", volts)

    def triangles(self, mesh: TriMesh) -> np.ndarray:
        """Triangles touching a feed edge."""
        t = mesh.edge_triangles[list(self.edges)].ravel()
        return np.unique(t[t >= 0])


def oriented_feed(mesh: TriMesh, edge: int, direction, voltage: complex = 1.0) -> tuple[int, complex]:
    """Feed voltage signed so the driven current flows along ``direction``."""
    t_plus = mesh.edge_triangles[edge].min()
    across = mesh.centroids[mesh.edge_triangles[edge].max()] - mesh.centroids[t_plus]
    sign = 1.0 if np.dot(across, np.asarray(direction, dtype=float)) >= 0 else -1.0
    return int(edge), sign * complex(voltage)


class _Geometry:
    """Per-triangle data shared by every assembly pass."""

    def __init__(self, mesh: TriMesh, basis: BasisSet, quad: QuadratureOrder):
        self.T = mesh.num_triangles
        self.N = basis.N
        self.corners = mesh.corners
        self.areas = mesh.areas
        self.basis = basis.tri_basis
        lengths = mesh.edge_lengths[mesh.triangle_edges]
        self.coef = basis.tri_sign * lengths  # s*l per local edge, 0 on boundary
        bf, self.wf = triangle_rule(quad.far)
        bn, self.wn = triangle_rule(quad.near)
        self.pf = map_points(self.corners, bf)
        self.pn = map_points(self.corners, bn)
        mean_edge = float(np.mean(mesh.edge_lengths))
        tree = cKDTree(mesh.centroids)
        hoods = tree.query_ball_point(mesh.centroids, r=quad.near_factor * mean_edge)
        self.near = [np.array(sorted(set(h) | {t}), dtype=np.int64) for t, h in enumerate(hoods)]


def _pair_moments_far(geo: _Geometry, rows: np.ndarray, ks) -> list:
    """Test/source moments for rows x all triangles using the far rule."""
    pt = geo.pf[rows]                      # (c, a, 3)
    ps = geo.pf                            # (T, b, 3)
    diff = pt[:, :, None, None, :] - ps[None, None, :, :, :]
    R = np.sqrt(np.einsum("cajbx,cajbx->cajb", diff, diff))
    with np.errstate(divide="ignore", invalid="ignore"):
        invR = np.where(R > 0, 1.0 / np.where(R > 0, R, 1.0), 0.0)
    out = []
    for k in ks:
        G = np.exp(-1j * k * R) * invR / _FOUR_PI
        G *= geo.wf[None, None, None, :] * geo.areas[None, None, :, None]
        g0 = G.sum(axis=3)                                 # (c, a, T)
        g1 = np.einsum("cajb,jbx->cajx", G, ps)            # (c, a, T, 3)
        out.append(_moments(geo.wf, pt, g0, g1))
    return out


def _moments(w, pt, g0, g1):
    A = np.einsum("a,cax,cajx->cj", w, pt, g1)
    B = np.einsum("a,caj,cax->cjx", w, g0, pt)
    C = np.einsum("a,cajx->cjx", w, g1)
    D = np.einsum("a,caj->cj", w, g0)
    return A, B, C, D


def _pair_moments_near(geo: _Geometry, p: np.ndarray, q: np.ndarray, ks) -> list:
    """Moments for explicit (p, q) pairs with singularity extraction."""
    pt = geo.pn[p]                         # (m, a, 3)
    ps = geo.pn[q]                         # (m, b, 3)
    diff = pt[:, :, None, :] - ps[:, None, :, :]
    R = np.sqrt(np.einsum("mabx,mabx->mab", diff, diff))
    na = pt.shape[1]
    obs = pt.reshape(-1, 3)
    src = np.repeat(geo.corners[q], na, axis=0)
    s0, s1 = static_potentials(obs, src)
    s0 = s0.reshape(-1, na) / _FOUR_PI
    s1 = s1.reshape(-1, na, 3) / _FOUR_PI
    wa = geo.wn[None, None, :] * geo.areas[q][:, None, None]
    out = []
    for k in ks:
        # (exp(-jkR) - 1)/R without cancellation
        smooth = -(0.5 * k * k * R) * np.sinc(k * R / (2 * np.pi)) ** 2 - 1j * k * np.sinc(k * R / np.pi)
        G = smooth / _FOUR_PI * wa
        g0 = G.sum(axis=2) + s0
        g1 = np.einsum("mab,mbx->max", G, ps) + s1
        # reuse the (c, a, T) layout with T == 1
        A, B, C, D = _moments(geo.wn, pt, g0[:, :, None], g1[:, :, None, :])
        out.append((A[:, 0], B[:, 0], C[:, 0], D[:, 0]))
    return out


def _local_blocks(geo: _Geometry, rows: np.ndarray, moments, k: float, eta0: float):
    """Galerkin 3x3 blocks for rows x all triangles from the pair moments."""
    A, B, C, D = moments
    verts = geo.corners  # free vertex of local edge i is corner i
    pr = verts[rows]
    qB = np.einsum("qjx,cqx->cqj", verts, B)
    pC = np.einsum("cix,cqx->cqi", pr, C)
    pdot = np.einsum("cix,qjx->cqij", pr, verts)
    vec = 0.25 * (A[:, :, None, None] - qB[:, :, None, :] - pC[:, :, :, None]
                  + pdot * D[:, :, None, None])
    cc = geo.coef[rows][:, None, :, None] * geo.coef[None, :, None, :] / geo.areas[None, :, None, None]
    return 1j * k * eta0 * cc * (vec - D[:, :, None, None] / (k * k))


def _scatter_index(geo: _Geometry, rows: np.ndarray):
    shape = (len(rows), geo.T, 3, 3)
    m_idx = np.broadcast_to(geo.basis[rows][:, None, :, None], shape)
    n_idx = np.broadcast_to(geo.basis[None, :, None, :], shape)
    mask = (m_idx >= 0) & (n_idx >= 0)
    return mask, (m_idx * geo.N + n_idx)[mask]


def _finish(flat: np.ndarray, N: int) -> np.ndarray:
    Z = flat.reshape(N, N)
    if not np.all(np.isfinite(Z)):
        raise AssemblyError("non-finite entry in impedance matrix")
    return 0.5 * (Z + Z.T)


def _assemble(mesh: TriMesh, basis: BasisSet, ks, quad: QuadratureOrder, eta0: float,
              chunk_budget: int = 1_500_000) -> list[np.ndarray]:
    geo = _Geometry(mesh, basis, quad)
    T, N = geo.T, geo.N
    nf = len(geo.wf)
    chunk = max(1, int(chunk_budget // (nf * nf * T)))
    flat = [np.zeros(N * N, dtype=complex) for _ in ks]
    for start in range(0, T, chunk):
        rows = np.arange(start, min(T, start + chunk))
        mom = [list(m) for m in _pair_moments_far(geo, rows, ks)]
        pp = np.concatenate([np.full(len(geo.near[r]), i) for i, r in enumerate(rows)])
        qq = np.concatenate([geo.near[r] for r in rows])
        near = _pair_moments_near(geo, rows[pp], qq, ks)
        for m, nm in zip(mom, near):
            for arr, val in zip(m, nm):
                arr[pp, qq] = val
        mask, lin = _scatter_index(geo, rows)
        for idx, k in enumerate(ks):
            vals = _local_blocks(geo, rows, mom[idx], k, eta0)[mask]
            flat[idx] += np.bincount(lin, weights=vals.real, minlength=N * N)
            flat[idx] += 1j * np.bincount(lin, weights=vals.imag, minlength=N * N)
    return [_finish(f, N) for f in flat]


def assemble_R0(mesh: TriMesh, basis: BasisSet, k: float, degree: int = 5, eta0: float = ETA0,
                chunk_budget: int = 1_500_000) -> np.ndarray:
    """Radiation matrix Re(Z0) from the smooth kernel sin(kR)/(4 pi R).

    The kernel has no singularity, so one product rule serves every pair.
    Using the same rule everywhere keeps the discrete operator positive
    semidefinite to rounding level, which mixed near/far rules do not.
    """
    geo = _Geometry(mesh, basis, QuadratureOrder(far=degree, near=degree))
    T, N = geo.T, geo.N
    pts, w = geo.pf, geo.wf
    chunk = max(1, int(chunk_budget // (len(w) ** 2 * T)))
    flat = np.zeros(N * N)
    for start in range(0, T, chunk):
        rows = np.arange(start, min(T, start + chunk))
        diff = pts[rows][:, :, None, None, :] - pts[None, None, :, :, :]
        R = np.sqrt(np.einsum("cajbx,cajbx->cajb", diff, diff))
        # imaginary part of the Green function, carried as a complex number
        G = -1j * k * np.sinc(k * R / np.pi) / _FOUR_PI
        G *= w[None, None, None, :] * geo.areas[None, None, :, None]
        g1 = np.einsum("cajb,jbx->cajx", G, pts)
        mom = _moments(w, pts[rows], G.sum(axis=3), g1)
        mask, lin = _scatter_index(geo, rows)
        flat += np.bincount(lin, weights=_local_blocks(geo, rows, mom, k, eta0)[mask].real,
                            minlength=N * N)
    return _finish(flat, N)


def assemble_Z0(mesh: TriMesh, basis: BasisSet, k: float, quad: QuadratureOrder = QuadratureOrder(),
                eta0: float = ETA0) -> np.ndarray:
    """Vacuum EFIE impedance matrix (complex symmetric, ohms)."""
    if not k > 0:
        raise ValueError("wavenumber must be positive")
    Z = _assemble(mesh, basis, [k], quad, eta0)[0]
    return assemble_R0(mesh, basis, k, quad.radiation, eta0) + 1j * Z.imag


def assemble_dX0_domega(mesh: TriMesh, basis: BasisSet, k: float, h: float = 1e-3,
                        quad: QuadratureOrder = QuadratureOrder(), eta0: float = ETA0) -> np.ndarray:
    """Central difference of the reactance matrix with respect to omega."""
    zp, zm = _assemble(mesh, basis, [k * (1 + h), k * (1 - h)], quad, eta0)
    omega = k * C0
    return (zp.imag - zm.imag) / (2 * h * omega)


def stored_energy_matrices(X0: np.ndarray, dX0_domega: np.ndarray, omega: float):
    """Electric and magnetic stored-energy matrices.

    ``W_e = I^H Xe I / (4 omega)`` and ``W_m = I^H Xm I / (4 omega)``.
    """
    wd = omega * dX0_domega
    return 0.5 * (wd - X0), 0.5 * (wd + X0)


@dataclasses.dataclass(frozen=True, eq=False)
class MaterialElements:
    """Per-triangle Gram blocks of the overlapping RWG functions.

    ``blocks[t]`` is the 3x3 block for the local edges of triangle ``t``;
    rows/columns of boundary edges are zero and ``index`` holds -1 there.
    """

    blocks: np.ndarray     # (T, 3, 3)
    index: np.ndarray      # (T, 3)
    N: int

    def __len__(self):
        return len(self.blocks)

    @property
    def _scatter(self):
        cached = self.__dict__.get("_scatter_cache")
        if cached is None:
            m = self.index[:, :, None]
            n = self.index[:, None, :]
            mask = np.broadcast_to((m >= 0) & (n >= 0), self.blocks.shape)
            lin = (np.broadcast_to(m, mask.shape) * self.N + np.broadcast_to(n, mask.shape))[mask]
            tri = np.broadcast_to(np.arange(len(self.blocks))[:, None, None], mask.shape)[mask]
            cached = (lin, tri, self.blocks[mask])
            self.__dict__["_scatter_cache"] = cached
        return cached

    def matrix(self, t: int) -> sp.csr_matrix:
        """Element matrix of triangle ``t`` as a sparse N x N matrix."""
        m = self.index[t]
        ok = m >= 0
        blk = self.blocks[t][np.ix_(ok, ok)]
        r, c = np.meshgrid(m[ok], m[ok], indexing="ij")
        return sp.csr_matrix((blk.ravel(), (r.ravel(), c.ravel())), shape=(self.N, self.N))

    def weighted_sum(self, weights: np.ndarray) -> np.ndarray:
        """Dense sum_t weights[t] * Psi_t."""
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(self.blocks),):
            raise ValueError(f"expected {len(self.blocks)} weights, got {weights.shape}")
        lin, tri, vals = self._scatter
        return np.bincount(lin, weights=vals * weights[tri], minlength=self.N * self.N).reshape(self.N, self.N)

    def gram(self) -> np.ndarray:
        return self.weighted_sum(np.ones(len(self.blocks)))

    def bilinear(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Per-triangle values of u^T Psi_t v (no conjugation)."""
        up = np.append(u, 0)[self.index]
        vp = np.append(v, 0)[self.index]
        return np.einsum("ti,tij,tj->t", up, self.blocks, vp)


def assemble_material_elements(mesh: TriMesh, basis: BasisSet) -> MaterialElements:
    bary, w = triangle_rule(2)  # RWG products are quadratic: exact
    pts = map_points(mesh.corners, bary)                    # (T, a, 3)
    rel = pts[:, :, None, :] - mesh.corners[:, None, :, :]  # (T, a, i, 3)
    integral = mesh.areas[:, None, None] * np.einsum("a,taix,tajx->tij", w, rel, rel)
    lengths = mesh.edge_lengths[mesh.triangle_edges]
    c = basis.tri_sign * lengths / (2 * mesh.areas[:, None])
    blocks = c[:, :, None] * c[:, None, :] * integral
    return MaterialElements(blocks, basis.tri_basis.copy(), basis.N)


def delta_gap_excitation(basis: BasisSet, feeds: FeedSpec) -> np.ndarray:
    V = np.zeros(basis.N, dtype=complex)
    for edge, volt in zip(feeds.edges, feeds.voltages):
        if edge < 0 or edge >= len(basis.edge_basis) or basis.edge_basis[edge] < 0:
            raise ValueError(f"feed edge {edge} is not an inner edge")
        m = basis.edge_basis[edge]
        V[m] += volt * basis.length[m]
    return V


@dataclasses.dataclass(frozen=True, eq=False)
class OperatorSet:
    Z0: np.ndarray
    dX0_domega: np.ndarray
    Psi: MaterialElements
    V: np.ndarray
    k: float
    eta0: float = ETA0

    @property
    def omega(self) -> float:
        return self.k * C0

    @property
    def N(self) -> int:
        return self.Z0.shape[0]

    @property
    def R0(self) -> np.ndarray:
        return self.Z0.real

    @property
    def X0(self) -> np.ndarray:
        return self.Z0.imag

    def energy_matrices(self):
        cached = self.__dict__.get("_xexm")
        if cached is None:
            cached = stored_energy_matrices(self.X0, self.dX0_domega, self.omega)
            self.__dict__["_xexm"] = cached
        return cached

    @property
    def Xe(self) -> np.ndarray:
        return self.energy_matrices()[0]

    @property
    def Xm(self) -> np.ndarray:
        return self.energy_matrices()[1]

    def subset(self, keep_basis: np.ndarray, V: np.ndarray | None = None) -> "OperatorSet":
        """Operators restricted to a subset of basis functions (exact for Galerkin)."""
        ix = np.ix_(keep_basis, keep_basis)
        return OperatorSet(self.Z0[ix], self.dX0_domega[ix], None,
                           self.V[keep_basis] if V is None else V, self.k, self.eta0)


_CACHE_MAGIC = b"MOMOPS\x00\x01"


def cache_key(mesh: TriMesh, k: float, quad: QuadratureOrder, h: float) -> str:
    s = f"{mesh.digest}|{k!r}|{quad.tag}|{h!r}".encode()
    return hashlib.sha256(s).hexdigest()[:32]


def save_operator_cache(path, mesh: TriMesh, Z0: np.ndarray, dX: np.ndarray, k: float) -> None:
    """Little-endian dump: magic, N (u4), T (u4), k (f8), sha256 mesh digest,
    then Z0 as complex128 and dX0/domega as float64, both row-major."""
    N = Z0.shape[0]
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<IId", N, mesh.num_triangles, float(k)))
        fh.write(bytes.fromhex(mesh.digest))
        fh.write(np.ascontiguousarray(Z0, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(dX, dtype="<f8").tobytes())


def load_operator_cache(path, mesh: TriMesh, k: float):
    with open(path, "rb") as fh:
        if fh.read(8) != _CACHE_MAGIC:
            raise ValueError(f"{path}: not an operator cache file")
        N, T, kk = struct.unpack("<IId", fh.read(16))
        digest = fh.read(32).hex()
        if T != mesh.num_triangles or digest != mesh.digest or kk != float(k):
            raise ValueError(f"{path}: cache does not match mesh/k")
        Z0 = np.frombuffer(fh.read(16 * N * N), dtype="<c16").reshape(N, N).astype(complex)
        dX = np.frombuffer(fh.read(8 * N * N), dtype="<f8").reshape(N, N).astype(float)
    return Z0, dX


def build_operators(mesh: TriMesh, basis: BasisSet, k: float, feeds: FeedSpec,
                    quad: QuadratureOrder = QuadratureOrder(), h: float = 1e-3,
                    eta0: float = ETA0, cache_dir=None) -> OperatorSet:
    """Assemble everything needed by the optimizer at wavenumber ``k``."""
    cached = None
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
        cached = cache_dir / f"ops-{cache_key(mesh, k, quad, h)}.bin"
    if cached is not None and cached.exists():
        Z0, dX = load_operator_cache(cached, mesh, k)
        log.info("loaded operators from %s", cached)
    else:
        Z0, zp, zm = _assemble(mesh, basis, [k, k * (1 + h), k * (1 - h)], quad, eta0)
        Z0 = assemble_R0(mesh, basis, k, quad.radiation, eta0) + 1j * Z0.imag
        dX = (zp.imag - zm.imag) / (2 * h * k * C0)
        if cached is not None:
            save_operator_cache(cached, mesh, Z0, dX, k)
    Psi = assemble_material_elements(mesh, basis)
    V = delta_gap_excitation(basis, feeds)
    return OperatorSet(Z0, dX, Psi, V, float(k), eta0)
