"""Q-factor minimization loop with density filtering and beta continuation."""

from __future__ import annotations

import dataclasses
import logging
import math
from typing import Callable

import numpy as np

from .filters import DensityFilter, DesignField, ProjectionSpec, backpropagate, build_density_filter
from .material import InterpolationSpec, assemble_Zrho
from .mma import MmaSettings, MmaState, mma_update
from .operators import OperatorSet
from .qfactor import (FACTORIZATIONS, FeedIsolatedError, SolverError, ThresholdResult,
                      design_sensitivities, solve_state, thresholded_analysis)
from .setups import Problem

log = logging.getLogger(__name__)

BETA_RULES = ("literal", "skip-first")
INIT_MODES = ("uniform", "random", "file")


@dataclasses.dataclass
class OptConfig:
    """Optimization settings.

    ``Rmin`` is a fraction of the circumscribing radius ``a``. ``init_value``
    defaults to ``Sf`` for the uniform seed. ``beta_rule="literal"`` lets the
    ``mod(i, 100) == 1`` trigger fire at i = 1; ``"skip-first"`` does not.
    """

    ka: float = 0.8
    Sf: float = 0.35
    Rmin: float = 0.15
    I_max: int = 600
    delta_rho_max: float = 0.01
    beta0: float = 1.0
    beta_max: float = 32.0
    eta: float = 0.5
    p: float = 1.0
    Omega_hi: float = 1e5
    Omega_lo: float = 1.0
    move: float = 0.25
    asymin: float = 1e-4
    init: str = "uniform"
    init_value: float | None = None
    seed: int = 0
    init_file: str | None = None
    init_design: np.ndarray | None = None
    snapshot_stride: int = 50
    beta_rule: str = "literal"
    mma_reset_on_beta: bool = False

    def __post_init__(self):
        if not self.ka > 0:
            raise ValueError("ka must be positive")
        if not 0 < self.Sf <= 1:
            raise ValueError("Sf must lie in (0, 1]")
        if not self.Rmin >= 0:
            raise ValueError("Rmin must be non-negative")
        if int(self.I_max) != self.I_max or self.I_max < 1:
            raise ValueError("I_max must be an integer >= 1")
        if not self.delta_rho_max > 0:
            raise ValueError("delta_rho_max must be positive")
        if not 0 < self.beta0 <= self.beta_max:
            raise ValueError("need 0 < beta0 <= beta_max")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")
        if self.init_value is not None and not 0 <= self.init_value <= 1:
            raise ValueError("init_value must lie in [0, 1]")
        if self.beta_rule not in BETA_RULES:
            raise ValueError(f"beta_rule must be one of {BETA_RULES}")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 0:
            raise ValueError("snapshot_stride must be a non-negative integer")
        self.interpolation  # validates the resistivity bounds
        self.projection     # validates eta
        MmaSettings(move=self.move, asymin=self.asymin)

    @property
    def interpolation(self) -> InterpolationSpec:
        return InterpolationSpec(self.Omega_lo, self.Omega_hi, self.p)

    @property
    def projection(self) -> ProjectionSpec:
        return ProjectionSpec(self.beta0, self.eta)


@dataclasses.dataclass(frozen=True)
class IterationRecord:
    iter: int
    Qe: float
    Qm: float
    Q: float
    beta: float
    max_drho: float      # change produced by this iteration's update; nan if none
    area_frac: float
    factorizations: int


@dataclasses.dataclass
class OptimizationResult:
    records: list[IterationRecord]
    design: DesignField
    termination: str
    snapshots: dict[int, np.ndarray]
    binary: np.ndarray | None = None
    threshold: ThresholdResult | None = None
    threshold_error: str | None = None

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    @property
    def Q(self) -> float:
        return self.final.Q

    @property
    def self_resonance(self) -> float:
        return abs(self.final.Qe - self.final.Qm) / self.final.Q

    @property
    def betas(self) -> list[float]:
        return [r.beta for r in self.records]


class OptimizationAborted(SolverError):
    """Numerical failure inside the loop; ``result`` holds the history so far."""

    def __init__(self, message: str, result: OptimizationResult):
        super().__init__(message)
        self.result = result


def area_fraction(rho_bar, areas, A0: float | None = None) -> float:
    """(1/A0) sum_t rho_bar_t A_t with A0 the total area by default."""
    areas = np.asarray(areas, dtype=float)
    A0 = float(areas.sum()) if A0 is None else float(A0)
    return float(np.dot(rho_bar, areas) / A0)


def seed_design(config: OptConfig, problem: Problem) -> DesignField:
    """Initial densities per ``config.init`` with pinned triangles set."""
    T = problem.mesh.num_triangles
    if config.init == "uniform":
        rho = np.full(T, config.Sf if config.init_value is None else config.init_value)
    elif config.init == "random":
        rho = np.random.default_rng(config.seed).uniform(0.0, 1.0, T)
    else:
        if config.init_design is None:
            raise ValueError("init='file' needs an initial design")
        rho = np.asarray(config.init_design, dtype=float)
        if rho.shape != (T,):
            raise ValueError(f"initial design has {rho.size} values, mesh has {T} triangles")
    return DesignField(rho, problem.fixed, problem.fixed_values)


def _beta_trigger(i: int, change: float, config: OptConfig) -> bool:
    periodic = i % 100 == 1 and (config.beta_rule == "literal" or i > 1)
    return change <= config.delta_rho_max or periodic


def optimize(config: OptConfig, problem: Problem, ops: OperatorSet,
             filt: DensityFilter | None = None,
             on_iteration: Callable[[IterationRecord], None] | None = None,
             on_snapshot: Callable[[int, np.ndarray], None] | None = None) -> OptimizationResult:
    """Minimize max(Qe, Qm) subject to the area fraction ``Sf``.

    Each iteration filters and projects the design, factors Z once, solves
    the state and both adjoints, and hands the chained gradients to MMA.
    The run stops when the update changes no design variable by
    ``delta_rho_max`` or more while beta is at ``beta_max``, or after
    ``I_max`` evaluations. The last evaluated design is hard-thresholded
    and analysed on the reduced PEC basis.
    """
    mesh = problem.mesh
    if filt is None:
        filt = build_density_filter(mesh, config.Rmin * mesh.a)
    spec = config.interpolation
    field = seed_design(config, problem)
    free = np.flatnonzero(~field.fixed_mask)
    areas = mesh.areas
    A0 = float(areas.sum())
    mma = MmaState(len(free), [1.0, 1.0, 0.0], MmaSettings(move=config.move, asymin=config.asymin))
    beta = float(config.beta0)
    records: list[IterationRecord] = []
    snapshots: dict[int, np.ndarray] = {}
    Qref = None
    termination = None

    def partial(reason):
        return OptimizationResult(records, field, reason, snapshots)

    i = 0
    while termination is None:
        i += 1
        proj = ProjectionSpec(beta, config.eta)
        field.update(filt, proj)
        count0 = FACTORIZATIONS.count
        try:
            Zrho = assemble_Zrho(field.rho_bar, ops.Psi, spec)
            st = solve_state(ops.Z0, Zrho, ops.V, ops.Xe, ops.Xm, ops.omega)
            sens = design_sensitivities(st, ops, field.rho_bar, spec)
        except (SolverError, ValueError) as exc:
            raise OptimizationAborted(f"iteration {i}: {exc}", partial("aborted")) from exc
        nfac = FACTORIZATIONS.count - count0
        af = area_fraction(field.rho_bar, areas, A0)
        if Qref is None:
            Qref = st.Q

        change = math.nan
        if i >= config.I_max:
            termination = "iteration-cap"
        else:
            fval = np.array([st.Qe / Qref, st.Qm / Qref, af - config.Sf])
            grads = [backpropagate(g, filt, field.rho_tilde, proj, field.fixed_mask)
                     for g in (sens.dQe_drho_bar / Qref, sens.dQm_drho_bar / Qref,
                               areas / A0)]
            dfdx = np.stack([g[free] for g in grads])
            res = mma_update(field.rho[free], fval, dfdx, 0.0, 1.0, mma)
            new = np.clip(res.x_new, 0.0, 1.0)
            change = float(np.max(np.abs(new - field.rho[free]))) if len(free) else 0.0
            if change < config.delta_rho_max and beta >= config.beta_max:
                termination = "converged"
            else:
                field.rho[free] = new

        rec = IterationRecord(i, st.Qe, st.Qm, st.Q, beta, change, af, nfac)
        records.append(rec)
        log.info("iter %d Q=%.6g Qe=%.6g Qm=%.6g beta=%g dmax=%.3g area=%.4f",
                 i, st.Q, st.Qe, st.Qm, beta, change, af)
        if on_iteration is not None:
            on_iteration(rec)
        if config.snapshot_stride and (i % config.snapshot_stride == 0 or i == 1):
            snapshots[i] = field.rho_bar.copy()
            if on_snapshot is not None:
                on_snapshot(i, snapshots[i])

        if termination is None and beta < config.beta_max and _beta_trigger(i, change, config):
            beta = min(2.0 * beta, config.beta_max)
            if config.mma_reset_on_beta:
                mma.reset()

    # the final design is the last evaluated one (its rho_bar matches records[-1])
    field.rho_bar = field.rho_bar.copy()
    result = OptimizationResult(records, field, termination, snapshots)
    result.binary = field.thresholded()
    try:
        result.threshold = thresholded_analysis(mesh, result.binary, problem.feeds, ops.k, problem.basis, ops)
    except (FeedIsolatedError, SolverError) as exc:
        result.threshold_error = str(exc)
        log.warning("thresholded analysis failed: %s", exc)
    return result


def pipeline_gradients(rho, problem: Problem, ops: OperatorSet, filt: DensityFilter,
                       proj: ProjectionSpec, spec: InterpolationSpec):
    """(Qe, Qm, dQe/drho, dQm/drho) through filter, projection and adjoints."""
    field = DesignField(rho, problem.fixed, problem.fixed_values).update(filt, proj)
    st = solve_state(ops.Z0, assemble_Zrho(field.rho_bar, ops.Psi, spec), ops.V, ops.Xe, ops.Xm, ops.omega)
    sens = design_sensitivities(st, ops, field.rho_bar, spec)
    ge = backpropagate(sens.dQe_drho_bar, filt, field.rho_tilde, proj, field.fixed_mask)
    gm = backpropagate(sens.dQm_drho_bar, filt, field.rho_tilde, proj, field.fixed_mask)
    return st.Qe, st.Qm, ge, gm


@dataclasses.dataclass
class GradientCheck:
    max_rel_error: float
    worst_triangle: int
    worst_quantity: str
    adjoint: np.ndarray      # (2, T): dQe/drho, dQm/drho
    finite_difference: np.ndarray

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol


def gradient_check(problem: Problem, ops: OperatorSet, config: OptConfig, rho=None,
                   h: float = 1e-5, beta: float | None = None) -> GradientCheck:
    """Adjoint gradients against central differences in every design variable.

    The relative error of each entry is |adjoint - fd| / |fd|; entries whose
    FD value is below 1e-8 of the largest one are compared against that
    floor instead, so exact zeros do not divide by zero.
    """
    filt = build_density_filter(problem.mesh, config.Rmin * problem.mesh.a)
    proj = ProjectionSpec(config.beta0 if beta is None else beta, config.eta)
    spec = config.interpolation
    if rho is None:
        rho = seed_design(config, problem).rho
    rho = np.asarray(rho, dtype=float)
    _, _, ge, gm = pipeline_gradients(rho, problem, ops, filt, proj, spec)
    adj = np.stack([ge, gm])
    fd = np.zeros_like(adj)
    for t in np.flatnonzero(problem.designable):
        up, dn = rho.copy(), rho.copy()
        up[t] += h
        dn[t] -= h
        if dn[t] < 0 or up[t] > 1:
            raise ValueError("finite-difference stencil leaves [0, 1]; choose an interior design")
        qp = pipeline_gradients(up, problem, ops, filt, proj, spec)[:2]
        qm = pipeline_gradients(dn, problem, ops, filt, proj, spec)[:2]
        fd[:, t] = (np.array(qp) - np.array(qm)) / (2 * h)
    floor = 1e-8 * np.max(np.abs(fd), axis=1, keepdims=True)
    rel = np.abs(adj - fd) / np.maximum(np.abs(fd), np.maximum(floor, 1e-300))
    q, t = np.unravel_index(int(np.argmax(rel)), rel.shape)
    return GradientCheck(float(rel[q, t]), int(t), ("Qe", "Qm")[q], adj, fd)
