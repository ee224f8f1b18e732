"""The adaptive loop: solve, estimate, mark, refine, repeat.

Each iteration solves the discrete optimality system on the current mesh,
computes the residual indicators and oscillations, marks elements and
bisects them.  The loop stops on the equidistribution terminate flag, when
the estimator falls below the tolerance, or when it runs out of iterations
or triangles.  A uniform-refinement baseline shares the same pipeline and
history schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import ElementIndicators, estimate
from .fem import h1_norm, trace_l2, transfer, transfer_trace
from .fem import FeFunction, TraceFunction
from .marking import MarkingDecision, mark
from .mesh import Mesh, bisect
from .problems import (
    Measurement,
    ProblemSpec,
    check_no_inverse_crime,
    generate_measurement,
)
from .solver import (
    DiscreteSystem,
    OptimalTriplet,
    SolverError,
    SolverSettings,
    objective,
    solve_optimality,
)

MEASUREMENT_LEVELS = 5
REFERENCE_LEVELS = 3


@dataclass(frozen=True)
class LoopConfig:
    strategy: str = "maximum"
    theta: float = 0.5
    tol: float = 1e-3
    max_iters: int = 20
    max_triangles: int = 50_000
    solver: SolverSettings = field(default_factory=SolverSettings)
    record_true_errors: bool = False
    measurement_levels: int = MEASUREMENT_LEVELS
    reference_levels: int = REFERENCE_LEVELS

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.max_triangles < 1:
            raise ValueError("max_triangles must be >= 1")


@dataclass
class IterationRecord:
    """One row of the adaptive history (plus non-serialized extras)."""

    k: int
    n_vertices: int
    n_triangles: int
    n_flux_dofs: int
    eta: float
    eta1: float
    eta2: float
    osc: float
    objective: float
    cg_iterations: int
    err_q: float = math.nan
    err_u: float = math.nan
    err_p: float = math.nan
    indicators: ElementIndicators | None = field(default=None, repr=False)
    decision: MarkingDecision | None = field(default=None, repr=False)
    triplet: OptimalTriplet | None = field(default=None, repr=False)


@dataclass
class AdaptiveHistory:
    problem: ProblemSpec
    config: LoopConfig
    records: list = field(default_factory=list)
    stop_reason: str = ""
    measurement: Measurement | None = None
    reference: OptimalTriplet | None = None
    final_mesh: Mesh | None = None
    final_triplet: OptimalTriplet | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


class PartialRunError(RuntimeError):
    """Solver failure mid-run; the history so far is attached."""

    def __init__(self, message, history: AdaptiveHistory):
        super().__init__(message)
        self.history = history


def run_adaptive(problem: ProblemSpec, config: LoopConfig,
                 measurement: Measurement | None = None) -> AdaptiveHistory:
    """Run the adaptive reconstruction loop on a benchmark problem."""
    return _run(problem, config, measurement, uniform=False)


def run_uniform(problem: ProblemSpec, config: LoopConfig,
                measurement: Measurement | None = None) -> AdaptiveHistory:
    """Uniform-refinement baseline: every iteration marks all triangles."""
    return _run(problem, config, measurement, uniform=True)


def _run(problem, config, measurement, uniform):
    if measurement is None:
        levels = config.measurement_levels
        if uniform:
            # a uniform run climbs exactly one level per iteration; keep the
            # data-generation mesh strictly ahead of it
            levels = max(levels, config.max_iters + 1)
        measurement = generate_measurement(problem, extra_levels=levels)
    mesh = problem.initial_mesh()
    data = problem.data(z=measurement)
    history = AdaptiveHistory(problem=problem, config=config,
                              measurement=measurement)
    keep_triplets = config.record_true_errors
    warm: TraceFunction | None = None

    for k in range(config.max_iters):
        check_no_inverse_crime(measurement, mesh)
        system = DiscreteSystem(mesh, data)
        try:
            triplet = solve_optimality(system, config.solver, warm_start=warm)
        except SolverError as exc:
            history.stop_reason = "solver_failure"
            history.final_mesh = mesh
            raise PartialRunError(str(exc), history) from exc
        indicators = estimate(triplet, data)

        if uniform:
            decision = MarkingDecision(
                marked=np.arange(mesh.n_triangles), threshold_used=0.0,
                strategy="uniform")
        else:
            decision = mark(indicators, config.strategy, config.theta,
                            config.tol)

        history.records.append(IterationRecord(
            k=k,
            n_vertices=mesh.n_vertices,
            n_triangles=mesh.n_triangles,
            n_flux_dofs=system.trace.n_dofs,
            eta=indicators.eta,
            eta1=indicators.eta1,
            eta2=indicators.eta2,
            osc=indicators.osc,
            objective=objective(triplet.q, system, config.solver, u=triplet.u),
            cg_iterations=triplet.iterations,
            indicators=indicators,
            decision=decision,
            triplet=triplet if keep_triplets else None,
        ))

        if decision.terminate:
            history.stop_reason = "terminate"
            break
        if not uniform and config.strategy != "equidistribution" \
                and indicators.eta <= config.tol:
            history.stop_reason = "tol"
            break
        if k == config.max_iters - 1:
            history.stop_reason = "max_iters"
            break
        if decision.marked.size == 0:
            history.stop_reason = "zero_marking"
            break

        fine = bisect(mesh, decision.marked)
        if fine.n_triangles > config.max_triangles:
            history.stop_reason = "max_triangles"
            break
        warm = transfer_trace(triplet.q, fine)
        mesh = fine

    # every loop exit happens before the refinement step, so this is the
    # mesh of the last recorded solve
    history.final_mesh = mesh
    history.final_triplet = triplet
    if keep_triplets and history.records:
        reference = overkill_reference(
            mesh, data, levels=config.reference_levels, settings=config.solver)
        attach_true_errors(history, reference)
    return history


def overkill_reference(mesh: Mesh, data, levels: int = REFERENCE_LEVELS,
                       settings: SolverSettings | None = None) -> OptimalTriplet:
    """Reference triplet on a uniformly over-refined descendant mesh.

    The comparator for the error decay is the regularized discrete limit,
    approximated by solving the same optimality system (same data, same
    regularization) a few uniform refinements past the final mesh.
    """
    settings = settings or SolverSettings()
    fine = mesh
    for _ in range(levels):
        fine = bisect(fine, np.arange(fine.n_triangles))
    system = DiscreteSystem(fine, data)
    return solve_optimality(system, settings)


def true_errors(triplet: OptimalTriplet, reference: OptimalTriplet):
    """Energy-norm errors of a triplet against a reference triplet.

    The reference must live on the same mesh or on a bisection descendant;
    the triplet is prolongated exactly onto the reference mesh (pointwise
    identical to evaluating it there), so the H1/L2 error integrals are
    exact for the piecewise-linear pair.

    Returns ``(err_u, err_p, err_q)``:
    H1 errors of state and costate, L2(GammaI) error of the flux.
    """
    if reference is None:
        raise ValueError("reference triplet is missing")
    fine = reference.mesh
    u_k = transfer(triplet.u, fine) if triplet.mesh is not fine else triplet.u
    p_k = transfer(triplet.p, fine) if triplet.mesh is not fine else triplet.p
    q_k = transfer_trace(triplet.q, fine) if triplet.mesh is not fine \
        else triplet.q
    du = FeFunction(u_k.space, reference.u.values - u_k.values)
    dp = FeFunction(p_k.space, reference.p.values - p_k.values)
    dq = TraceFunction(q_k.space, reference.q.values - q_k.values)
    return h1_norm(du), h1_norm(dp), trace_l2(dq)


def attach_true_errors(history: AdaptiveHistory, reference: OptimalTriplet):
    """Fill err_u / err_p / err_q columns of a history with kept triplets."""
    history.reference = reference
    for record in history.records:
        if record.triplet is None:
            raise ValueError("history was run without record_true_errors")
        err_u, err_p, err_q = true_errors(record.triplet, reference)
        record.err_u = err_u
        record.err_p = err_p
        record.err_q = err_q
