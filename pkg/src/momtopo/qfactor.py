"""State and adjoint solves, Q-factors, design sensitivities and sweeps."""

from __future__ import annotations

import dataclasses
import logging

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .material import InterpolationSpec, assemble_Zrho, d_surface_resistivity
from .mesh import BasisSet, TriMesh
from .operators import FeedSpec, MaterialElements, OperatorSet, QuadratureOrder, build_operators

log = logging.getLogger(__name__)

SELF_RESONANCE_TOL = 0.05
RESIDUAL_TOL = 1e-10
COND_LIMIT = 1e14


class SolverError(RuntimeError):
    """Singular, ill-conditioned or inaccurate linear solve."""


class FeedIsolatedError(ValueError):
    """The thresholded design no longer carries the feed basis function."""


class FactorizationCounter:
    """Counts LU factorizations; used to assert reuse across solves."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


FACTORIZATIONS = FactorizationCounter()


class Factorization:
    """Dense LU of Z with condition check and residual-checked solves.

    Z is complex symmetric for Galerkin EFIE, so transposed systems reuse
    the plain solve; otherwise LAPACK's transposed solve is used.
    """

    def __init__(self, Z: np.ndarray):
        Z = np.asarray(Z)
        if not np.all(np.isfinite(Z)):
            raise SolverError("system matrix has non-finite entries")
        self.Z = Z
        scale = np.max(np.abs(Z))
        self.symmetric = bool(np.max(np.abs(Z - Z.T)) <= 1e-10 * scale)
        anorm = np.linalg.norm(Z, 1)
        with np.errstate(all="ignore"):
            try:
                self.lu, self.piv = sla.lu_factor(Z, check_finite=False)
            except (ValueError, np.linalg.LinAlgError) as exc:
                raise SolverError(f"factorization failed: {exc}") from exc
        FACTORIZATIONS.count += 1
        gecon = lapack.zgecon if np.iscomplexobj(self.lu) else lapack.dgecon
        rcond, info = gecon(self.lu, anorm, norm="1")
        self.cond = np.inf if rcond == 0 else 1.0 / rcond
        if info != 0 or not self.cond <= COND_LIMIT:
            raise SolverError(f"system matrix is ill-conditioned (condition estimate {self.cond:.3e})")

    def solve(self, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        trans = 1 if (transpose and not self.symmetric) else 0
        A = self.Z.T if trans else self.Z
        x = sla.lu_solve((self.lu, self.piv), rhs, trans=trans, check_finite=False)
        nb = np.linalg.norm(rhs)
        if nb == 0:
            return x
        res = np.linalg.norm(A @ x - rhs) / nb
        if res > RESIDUAL_TOL:
            x = x + sla.lu_solve((self.lu, self.piv), rhs - A @ x, trans=trans, check_finite=False)
            res = np.linalg.norm(A @ x - rhs) / nb
        if not res <= RESIDUAL_TOL:
            raise SolverError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
        return x


def quadratic(I: np.ndarray, M: np.ndarray) -> float:
    """Re(I^H M I)."""
    return float(np.real(np.vdot(I, M @ I)))


def q_factors(I, Xe, Xm, R0, omega=None) -> tuple[float, float, float]:
    """(Qe, Qm, max) with Q_{e/m} = Re(I^H X_{e/m} I) / Re(I^H R0 I).

    ``omega`` cancels out of the ratio and is accepted for symmetry with
    the energy definitions ``W = I^H X I / (4 omega)``.
    """
    rad = quadratic(I, R0)
    if not rad > 0:
        raise SolverError(f"non-radiating current (I^H R0 I = {rad:.3e})")
    qe = quadratic(I, Xe) / rad
    qm = quadratic(I, Xm) / rad
    return qe, qm, max(qe, qm)


@dataclasses.dataclass
class StateSolution:
    I: np.ndarray
    factor: Factorization
    omega: float
    Prad: float
    We: float
    Wm: float
    Qe: float
    Qm: float

    @property
    def Q(self) -> float:
        return max(self.Qe, self.Qm)

    @property
    def self_resonance(self) -> float:
        """|Qe - Qm| / Q."""
        return abs(self.Qe - self.Qm) / self.Q

    @property
    def is_self_resonant(self) -> bool:
        return self.self_resonance <= SELF_RESONANCE_TOL


def solve_state(Z0: np.ndarray, Zrho, V: np.ndarray, Xe: np.ndarray, Xm: np.ndarray,
                omega: float) -> StateSolution:
    """Factor Z = Z0 + Zrho once, solve Z I = V and evaluate energies and Q."""
    V = np.asarray(V, dtype=complex)
    if not np.any(V):
        raise ValueError("excitation vector is zero")
    Z = Z0 if Zrho is None else Z0 + Zrho
    fac = Factorization(Z)
    I = fac.solve(V)
    R0 = Z0.real
    prad = 0.5 * quadratic(I, R0)
    qe, qm, _ = q_factors(I, Xe, Xm, R0)
    return StateSolution(I, fac, omega, prad, quadratic(I, Xe) / (4 * omega),
                         quadratic(I, Xm) / (4 * omega), qe, qm)


def evaluate_design(ops: OperatorSet, rho_bar, spec: InterpolationSpec = InterpolationSpec()) -> StateSolution:
    """State solution for a gray design on the full basis."""
    Zrho = assemble_Zrho(rho_bar, ops.Psi, spec)
    return solve_state(ops.Z0, Zrho, ops.V, ops.Xe, ops.Xm, ops.omega)


def adjoint_rhs(I: np.ndarray, Q_em: float, Prad: float, X_em: np.ndarray, R0: np.ndarray) -> np.ndarray:
    """-(dQ/dI)^T with dQ/dI = I^H (X - Q R0) / (2 Prad) (conjugate held fixed)."""
    return -((X_em - Q_em * R0) @ np.conj(I)) / (2.0 * Prad)


def solve_adjoint(state: StateSolution, rhs: np.ndarray) -> np.ndarray:
    """Solve Z^T lambda = rhs with the state factorization."""
    return state.factor.solve(np.asarray(rhs, dtype=complex), transpose=True)


@dataclasses.dataclass
class SensitivityReport:
    dQe_drho_bar: np.ndarray
    dQm_drho_bar: np.ndarray
    lambda_e: np.ndarray
    lambda_m: np.ndarray


def sensitivities(lam: np.ndarray, I: np.ndarray, rho_bar, Psi: MaterialElements,
                  spec: InterpolationSpec = InterpolationSpec()) -> np.ndarray:
    """Per-triangle 2 Re(lambda^T dRs/drho_bar Psi_t I)."""
    return 2.0 * np.real(d_surface_resistivity(rho_bar, spec) * Psi.bilinear(lam, I))


def design_sensitivities(state: StateSolution, ops: OperatorSet, rho_bar,
                         spec: InterpolationSpec = InterpolationSpec()) -> SensitivityReport:
    """Both adjoints from one factorization and their triangle sensitivities."""
    lam = []
    for Q, X in ((state.Qe, ops.Xe), (state.Qm, ops.Xm)):
        lam.append(solve_adjoint(state, adjoint_rhs(state.I, Q, state.Prad, X, ops.R0)))
    return SensitivityReport(sensitivities(lam[0], state.I, rho_bar, ops.Psi, spec),
                             sensitivities(lam[1], state.I, rho_bar, ops.Psi, spec), lam[0], lam[1])


@dataclasses.dataclass
class ThresholdResult:
    Q: float
    Qe: float
    Qm: float
    I_reduced: np.ndarray = dataclasses.field(repr=False)
    keep: np.ndarray = dataclasses.field(repr=False)

    @property
    def self_resonance(self) -> float:
        return abs(self.Qe - self.Qm) / self.Q


def metal_basis(basis: BasisSet, binary) -> np.ndarray:
    """Indices of basis functions whose two triangles are both metal."""
    metal = np.asarray(binary) >= 0.5
    return np.flatnonzero(metal[basis.plus] & metal[basis.minus])


def thresholded_analysis(mesh: TriMesh, binary, feeds: FeedSpec, k: float, basis: BasisSet | None = None,
                         ops: OperatorSet | None = None,
                         quad: QuadratureOrder = QuadratureOrder()) -> ThresholdResult:
    """PEC analysis of a 0/1 design on the basis restricted to metal pairs.

    Galerkin matrices of the reduced basis are submatrices of the full ones,
    so ``ops`` assembled on the whole domain at the same ``k`` is sliced
    rather than reassembled.
    """
    from .mesh import build_rwg

    binary = np.asarray(binary, dtype=float)
    if binary.shape != (mesh.num_triangles,):
        raise ValueError(f"expected {mesh.num_triangles} design values, got shape {binary.shape}")
    if basis is None:
        basis = build_rwg(mesh)
    keep = metal_basis(basis, binary)
    feed_basis = [int(basis.edge_basis[e]) for e in feeds.edges]
    if not set(feed_basis) <= set(keep.tolist()):
        raise FeedIsolatedError("feed isolated: a feed edge does not join two metal triangles")
    if ops is None:
        ops = build_operators(mesh, basis, k, feeds, quad)
    elif not np.isclose(ops.k, k, rtol=1e-14):
        raise ValueError("operators were assembled at a different wavenumber")
    sub = ops.subset(keep)
    st = solve_state(sub.Z0, None, sub.V, sub.Xe, sub.Xm, sub.omega)
    return ThresholdResult(st.Q, st.Qe, st.Qm, st.I, keep)


@dataclasses.dataclass
class SweepRow:
    ka: float
    Qe: float = float("nan")
    Qm: float = float("nan")
    Q: float = float("nan")
    error: str | None = None

    @property
    def selfres(self) -> bool:
        return self.error is None and abs(self.Qe - self.Qm) / self.Q <= SELF_RESONANCE_TOL


def analyze(mesh: TriMesh, basis: BasisSet, design, feeds: FeedSpec, ka: float, thresholded: bool = False,
            spec: InterpolationSpec = InterpolationSpec(), quad: QuadratureOrder = QuadratureOrder()) -> SweepRow:
    """Q of a fixed design at one electrical size."""
    k = ka / mesh.a
    ops = build_operators(mesh, basis, k, feeds, quad)
    if thresholded:
        res = thresholded_analysis(mesh, design, feeds, k, basis, ops)
        return SweepRow(float(ka), res.Qe, res.Qm, res.Q)
    st = evaluate_design(ops, np.asarray(design, dtype=float), spec)
    return SweepRow(float(ka), st.Qe, st.Qm, st.Q)


def frequency_sweep(design, ka_list, mesh: TriMesh, feeds: FeedSpec, basis: BasisSet | None = None,
                    thresholded: bool = False, spec: InterpolationSpec = InterpolationSpec(),
                    quad: QuadratureOrder = QuadratureOrder()) -> list[SweepRow]:
    """Evaluate a fixed design over ``ka_list``; failing points become error rows."""
    from .mesh import build_rwg

    ka_list = [float(x) for x in ka_list]
    if not ka_list:
        raise ValueError("empty ka list")
    if any(x <= 0 for x in ka_list) or any(b <= a for a, b in zip(ka_list, ka_list[1:])):
        raise ValueError("ka values must be positive and strictly increasing")
    basis = build_rwg(mesh) if basis is None else basis
    rows = []
    for ka in ka_list:
        try:
            rows.append(analyze(mesh, basis, design, feeds, ka, thresholded, spec, quad))
        except (SolverError, FeedIsolatedError) as exc:
            log.warning("ka=%g: %s", ka, exc)
            rows.append(SweepRow(ka, error=str(exc)))
    return rows
