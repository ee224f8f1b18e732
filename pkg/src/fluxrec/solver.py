"""Discrete optimality system for the flux reconstruction problem.

On a fixed mesh the regularized least-squares problem reduces to a linear
system for the boundary flux alone: eliminating state and costate turns the
stationarity condition into ``H q = b`` with the symmetric positive definite
reduced operator ``H = beta M_i + B^T A^{-1} M_a A^{-1} B``.  The solver runs
preconditioned conjugate gradients on ``H`` (preconditioner ``M_i``, so the
monitored residual is the natural L2(GammaI) one); every operator
application costs one state-type and one costate-type inner solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import (
    GAUSS2_POINTS,
    GAUSS2_WEIGHTS,
    CoefficientSet,
    FeFunction,
    FeSpace,
    TraceFunction,
    TraceSpace,
    _eval_data,
    assemble_bilinear,
    assemble_load,
    assemble_trace_operators,
    boundary_load,
    transfer,
    transfer_trace,
)
from .mesh import BoundaryTag, Mesh


class SolverError(RuntimeError):
    """Iterative solver failed to reach its tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances for the outer reduced-CG iteration and the inner solves."""

    cg_tol: float = 1e-10
    cg_max_iters: int = 1000
    inner_solver: str = "direct"  # or "cg"

    def __post_init__(self):
        if not self.cg_tol > 0.0:
            raise ValueError("cg_tol must be > 0")
        if self.inner_solver not in ("direct", "cg"):
            raise ValueError("inner_solver must be 'direct' or 'cg'")


@dataclass(frozen=True)
class ProblemData:
    """Coefficients and data callables defining one inversion problem.

    ``f`` and ``u_a`` are the source and ambient temperature; ``z`` is the
    measured temperature on GammaA (may be None for pure forward solves).
    All callables take vectorized ``(x, y)`` arguments.
    """

    coeffs: CoefficientSet
    f: object = None
    u_a: object = None
    z: object = None


@dataclass
class OptimalTriplet:
    """State, costate and flux solving the discrete optimality system."""

    u: FeFunction
    p: FeFunction
    q: TraceFunction
    iterations: int = 0
    residual: float = 0.0

    def __post_init__(self):
        if not (self.u.mesh is self.p.mesh is self.q.mesh):
            raise ValueError("state, costate and flux must share one mesh")

    @property
    def mesh(self) -> Mesh:
        return self.u.mesh


class DiscreteSystem:
    """All operators of the optimality system assembled on one mesh.

    Holds the weighted bilinear operator ``A``, the load vector ``F``, the
    boundary mass matrices, the flux coupling ``B`` and the measurement
    moment vector ``Z_i = int_{GammaA} z phi_i``.  Factorizations are cached
    so repeated inner solves are cheap.
    """

    def __init__(self, mesh: Mesh, data: ProblemData):
        self.mesh = mesh
        self.data = data
        self.space = FeSpace(mesh)
        self.trace = TraceSpace.from_mesh(mesh)
        self.A = assemble_bilinear(mesh, data.coeffs)
        self.F = assemble_load(mesh, data.f, data.u_a, data.coeffs)
        self.M_i, self.B, self.M_a = assemble_trace_operators(mesh)
        if data.z is not None:
            self.Z = boundary_load(mesh, data.z, BoundaryTag.GAMMA_A,
                                   "measurement z")
            self.z_sq = _boundary_l2_sq_of_data(mesh, data.z)
        else:
            self.Z = None
            self.z_sq = 0.0
        self._A_lu = None
        self._Mi_lu = None

    @property
    def beta(self) -> float:
        return self.data.coeffs.beta

    def solve_A(self, rhs: np.ndarray, settings: SolverSettings) -> np.ndarray:
        if settings.inner_solver == "direct":
            if self._A_lu is None:
                self._A_lu = spla.splu(self.A.tocsc())
            return self._A_lu.solve(rhs)
        x, info = spla.cg(self.A, rhs, rtol=settings.cg_tol / 10.0,
                          atol=0.0, maxiter=10 * settings.cg_max_iters)
        if info != 0:
            raise SolverError(f"inner CG on the state operator failed (info={info})")
        return x

    def solve_Mi(self, rhs: np.ndarray) -> np.ndarray:
        if self._Mi_lu is None:
            self._Mi_lu = spla.splu(self.M_i.tocsc())
        return self._Mi_lu.solve(rhs)

    def require_z(self):
        if self.Z is None:
            raise ValueError("problem data carries no measurement z")


def _boundary_l2_sq_of_data(mesh: Mesh, z) -> float:
    """``int_{GammaA} z^2`` with the same 2-point Gauss rule as the loads."""
    face_ids = mesh.faces_with_tag(BoundaryTag.GAMMA_A)
    faces = mesh.faces[face_ids]
    pa = mesh.vertices[faces[:, 0]]
    pb = mesh.vertices[faces[:, 1]]
    lens = mesh.face_lengths[face_ids]
    total = 0.0
    for t, w in zip(GAUSS2_POINTS, GAUSS2_WEIGHTS):
        x = pa + t * (pb - pa)
        zv = _eval_data(z, x[:, 0], x[:, 1], "measurement z")
        total += float((w * lens * zv ** 2).sum())
    return total


def solve_state(q: TraceFunction, system: DiscreteSystem,
                settings: SolverSettings) -> FeFunction:
    """Forward solve ``A u = F - B q`` for the temperature field."""
    rhs = system.F - system.B @ q.values
    return FeFunction(system.space, system.solve_A(rhs, settings))


def solve_costate(u: FeFunction, system: DiscreteSystem,
                  settings: SolverSettings) -> FeFunction:
    """Adjoint solve ``A p = M_a u - Z`` driven by the data misfit."""
    system.require_z()
    rhs = system.M_a @ u.values - system.Z
    return FeFunction(system.space, system.solve_A(rhs, settings))


def objective(q: TraceFunction, system: DiscreteSystem,
              settings: SolverSettings, u: FeFunction | None = None) -> float:
    """Regularized misfit ``J(q)``, consistent with the assembled operators."""
    system.require_z()
    if u is None:
        u = solve_state(q, system, settings)
    uv = u.values
    misfit = float(uv @ (system.M_a @ uv) - 2.0 * (system.Z @ uv) + system.z_sq)
    reg = float(q.values @ (system.M_i @ q.values))
    return 0.5 * misfit + 0.5 * system.beta * reg


def hessian_apply(w: np.ndarray, system: DiscreteSystem,
                  settings: SolverSettings) -> np.ndarray:
    """Apply the reduced operator ``H = beta M_i + B^T A^-1 M_a A^-1 B``."""
    du = system.solve_A(system.B @ w, settings)
    dp = system.solve_A(system.M_a @ du, settings)
    return system.beta * (system.M_i @ w) + system.B.T @ dp


def reduced_gradient(q: TraceFunction, system: DiscreteSystem,
                     settings: SolverSettings) -> TraceFunction:
    """Riesz representative of J'(q): solves ``M_i g = beta M_i q - B^T p``."""
    u = solve_state(q, system, settings)
    p = solve_costate(u, system, settings)
    rhs = system.beta * (system.M_i @ q.values) - system.B.T @ p.values
    return TraceFunction(system.trace, system.solve_Mi(rhs))


def solve_optimality(system: DiscreteSystem, settings: SolverSettings,
                     warm_start: TraceFunction | None = None) -> OptimalTriplet:
    """Solve the discrete optimality system on the system's mesh.

    Runs CG on the reduced operator with the GammaI mass matrix as
    preconditioner.  The iteration stops when the M_i-weighted residual
    drops below ``cg_tol`` relative to the initial residual (plus a
    machine-precision floor so warm starts cannot stall the iteration).
    """
    system.require_z()
    u0 = FeFunction(system.space, system.solve_A(system.F, settings))
    p0 = solve_costate(u0, system, settings)
    b = system.B.T @ p0.values

    if warm_start is not None:
        if warm_start.mesh is not system.mesh:
            raise ValueError("warm start lives on a different mesh")
        q = warm_start.values.copy()
        r = b - hessian_apply(q, system, settings)
    else:
        q = np.zeros(system.trace.n_dofs)
        r = b.copy()

    z = system.solve_Mi(r)
    rho = float(r @ z)
    b_norm = float(np.sqrt(max(b @ system.solve_Mi(b), 0.0)))
    r0 = float(np.sqrt(max(rho, 0.0)))
    tol = settings.cg_tol * r0 + 100.0 * np.finfo(float).eps * b_norm
    iterations = 0
    res = r0
    d = z.copy()
    while res > tol and iterations < settings.cg_max_iters:
        Hd = hessian_apply(d, system, settings)
        denom = float(d @ Hd)
        if denom <= 0.0:
            raise SolverError(
                "reduced operator lost positive definiteness "
                f"after {iterations} iterations (residual {res:.3e})",
                iterations=iterations, residual=res)
        step = rho / denom
        q += step * d
        r -= step * Hd
        z = system.solve_Mi(r)
        rho_new = float(r @ z)
        res = float(np.sqrt(max(rho_new, 0.0)))
        d = z + (rho_new / rho) * d
        rho = rho_new
        iterations += 1
    if res > tol:
        raise SolverError(
            f"reduced CG did not converge in {iterations} iterations "
            f"(residual {res:.3e}, target {tol:.3e})",
            iterations=iterations, residual=res)

    q_fun = TraceFunction(system.trace, q)
    u = solve_state(q_fun, system, settings)
    p = solve_costate(u, system, settings)
    return OptimalTriplet(u=u, p=p, q=q_fun, iterations=iterations, residual=res)


def residual_apply(triplet: OptimalTriplet, test: FeFunction, which: str,
                   system: DiscreteSystem) -> float:
    """Residual functional of the state or costate equation at a test function.

    For a test function in the triplet's own space this vanishes to solver
    tolerance (Galerkin orthogonality).  The test function may also live on
    a bisection descendant of the triplet's mesh; the triplet is then
    prolongated exactly and the residual evaluated with operators assembled
    on the finer mesh.
    """
    if which not in ("state", "costate"):
        raise ValueError("which must be 'state' or 'costate'")
    if test.mesh is triplet.mesh:
        sys_t = system
        u, p, q = triplet.u, triplet.p, triplet.q
    else:
        sys_t = DiscreteSystem(test.mesh, system.data)
        u = transfer(triplet.u, test.mesh)
        p = transfer(triplet.p, test.mesh)
        q = transfer_trace(triplet.q, test.mesh)
    t = test.values
    if which == "state":
        return float(t @ (sys_t.F - sys_t.B @ q.values - sys_t.A @ u.values))
    sys_t.require_z()
    return float(t @ (sys_t.M_a @ u.values - sys_t.Z - sys_t.A @ p.values))
