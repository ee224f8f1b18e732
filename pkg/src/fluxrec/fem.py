"""P1 finite element spaces, assembly and norms on triangular meshes.

The bilinear form is the weighted inner product
``a(u, v) = (alpha grad u, grad v) + (gamma u, v)_{Gamma_a}``;
the Robin term on the accessible boundary makes the assembled operator
symmetric positive definite.  All P1-times-P1 products are integrated
exactly; data terms use a 3-point barycentric midpoint rule in the volume
(exact for quadratics) and 2-point Gauss on boundary faces (exact for
cubics).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import BoundaryTag, Mesh, MeshError

# 2-point Gauss rule on [0, 1] (weights sum to 1)
GAUSS2_POINTS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
GAUSS2_WEIGHTS = np.array([0.5, 0.5])

# 3-point Gauss rule on [0, 1]
GAUSS3_POINTS = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
GAUSS3_WEIGHTS = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


@dataclass(frozen=True)
class CoefficientSet:
    """Diffusivity, boundary heat-transfer and regularization constants."""

    alpha: float
    gamma: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "gamma", "beta"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"coefficient {name} must be > 0")


@dataclass(frozen=True)
class FeSpace:
    """Vertex-based P1 space; one dof per mesh vertex."""

    mesh: Mesh

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_vertices


@dataclass(frozen=True)
class TraceSpace:
    """Restriction of the P1 space to the inaccessible boundary.

    The dofs are exactly the GammaI vertices of the mesh, ordered by
    ascending vertex id.
    """

    mesh: Mesh
    vertex_ids: np.ndarray = field(repr=False)

    @classmethod
    def from_mesh(cls, mesh: Mesh) -> "TraceSpace":
        face_ids = mesh.faces_with_tag(BoundaryTag.GAMMA_I)
        if face_ids.size == 0:
            raise MeshError("mesh has no GammaI face")
        ids = np.unique(mesh.faces[face_ids])
        ids.setflags(write=False)
        return cls(mesh, ids)

    @property
    def n_dofs(self) -> int:
        return self.vertex_ids.shape[0]

    def dof_of_vertex(self) -> np.ndarray:
        """Vertex id -> trace dof index, -1 off GammaI."""
        out = np.full(self.mesh.n_vertices, -1, dtype=np.int64)
        out[self.vertex_ids] = np.arange(self.n_dofs)
        return out


def _check_values(values, n, what):
    values = np.asarray(values, dtype=float)
    if values.shape != (n,):
        raise ValueError(f"{what} expects {n} coefficients, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} coefficients contain non-finite entries")
    return values


@dataclass
class FeFunction:
    """Nodal P1 function: one coefficient per mesh vertex."""

    space: FeSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.values, self.space.n_dofs, "FeFunction")

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    def copy(self) -> "FeFunction":
        return FeFunction(self.space, self.values.copy())


@dataclass
class TraceFunction:
    """Nodal function on the GammaI trace space."""

    space: TraceSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.values, self.space.n_dofs, "TraceFunction")

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    def copy(self) -> "TraceFunction":
        return TraceFunction(self.space, self.values.copy())


def p1_gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the three barycentric basis functions, shape (m, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    areas = mesh.areas()
    grads = np.empty((mesh.n_triangles, 3, 2))
    for k in range(3):
        e = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]
        grads[:, k, 0] = -e[:, 1]
        grads[:, k, 1] = e[:, 0]
    grads /= (2.0 * areas)[:, None, None]
    return grads


def element_gradients(fun: FeFunction) -> np.ndarray:
    """Constant gradient of a P1 function per triangle, shape (m, 2)."""
    grads = p1_gradients(fun.mesh)
    vals = fun.values[fun.mesh.triangles]
    return np.einsum("tk,tkd->td", vals, grads)


def _stiffness(mesh: Mesh) -> sp.csr_matrix:
    """P1 stiffness matrix (unit coefficient)."""
    grads = p1_gradients(mesh)
    areas = mesh.areas()
    local = np.einsum("tid,tjd->tij", grads, grads) * areas[:, None, None]
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _boundary_mass(mesh: Mesh, tag: BoundaryTag) -> sp.csr_matrix:
    """Boundary mass matrix over faces with the given tag, size n x n."""
    n = mesh.n_vertices
    face_ids = mesh.faces_with_tag(tag)
    if face_ids.size == 0:
        return sp.csr_matrix((n, n))
    faces = mesh.faces[face_ids]
    lens = mesh.face_lengths[face_ids]
    local = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])
    vals = lens[:, None, None] * local[None, :, :]
    rows = np.repeat(faces, 2, axis=1).ravel()
    cols = np.tile(faces, (1, 2)).ravel()
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_bilinear(mesh: Mesh, coeffs: CoefficientSet) -> sp.csr_matrix:
    """Assemble ``alpha * stiffness + gamma * GammaA boundary mass``.

    Raises if the mesh has no GammaA face, since the operator would then be
    singular on constants.
    """
    if mesh.faces_with_tag(BoundaryTag.GAMMA_A).size == 0:
        raise MeshError("mesh has no GammaA face; bilinear form is singular")
    return (coeffs.alpha * _stiffness(mesh)
            + coeffs.gamma * _boundary_mass(mesh, BoundaryTag.GAMMA_A)).tocsr()


def _eval_data(fun, x, y, what):
    vals = np.asarray(fun(x, y), dtype=float)
    vals = np.broadcast_to(vals, np.shape(x)).astype(float)
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"{what} evaluated to a non-finite value "
                         "at a quadrature point")
    return vals


def volume_load(mesh: Mesh, f) -> np.ndarray:
    """Load vector of the source term, 3-point edge-midpoint quadrature."""
    n = mesh.n_vertices
    F = np.zeros(n)
    if f is None:
        return F
    p = mesh.vertices[mesh.triangles]
    areas = mesh.areas()
    tri = mesh.triangles
    for i, j in ((0, 1), (1, 2), (2, 0)):
        mid = 0.5 * (p[:, i] + p[:, j])
        fv = _eval_data(f, mid[:, 0], mid[:, 1], "source f")
        w = areas / 3.0 * fv
        # the P1 basis takes value 1/2 at the two midpoint-adjacent vertices
        np.add.at(F, tri[:, i], 0.5 * w)
        np.add.at(F, tri[:, j], 0.5 * w)
    return F


def boundary_load(mesh: Mesh, g, tag: BoundaryTag, what="boundary data") -> np.ndarray:
    """Load vector of a boundary density over the tagged faces, 2-point Gauss."""
    n = mesh.n_vertices
    F = np.zeros(n)
    if g is None:
        return F
    face_ids = mesh.faces_with_tag(tag)
    if face_ids.size == 0:
        return F
    faces = mesh.faces[face_ids]
    pa = mesh.vertices[faces[:, 0]]
    pb = mesh.vertices[faces[:, 1]]
    lens = mesh.face_lengths[face_ids]
    for t, w in zip(GAUSS2_POINTS, GAUSS2_WEIGHTS):
        x = pa + t * (pb - pa)
        gv = _eval_data(g, x[:, 0], x[:, 1], what)
        np.add.at(F, faces[:, 0], w * lens * gv * (1.0 - t))
        np.add.at(F, faces[:, 1], w * lens * gv * t)
    return F


def assemble_load(mesh: Mesh, f, u_a, coeffs: CoefficientSet) -> np.ndarray:
    """Right-hand side ``F_i = (f, phi_i) + (gamma u_a, phi_i)_{Gamma_a}``."""
    F = volume_load(mesh, f)
    if u_a is not None:
        F += coeffs.gamma * boundary_load(mesh, u_a, BoundaryTag.GAMMA_A,
                                          "ambient temperature u_a")
    return F


def assemble_trace_operators(mesh: Mesh):
    """GammaI mass, full-to-trace coupling and GammaA mass.

    Returns ``(M_i, B, M_a)`` where ``M_i`` is the m x m GammaI mass matrix
    on the trace space, ``B`` the n x m coupling with
    ``B[i, j] = int_{GammaI} psi_j phi_i`` and ``M_a`` the n x n GammaA
    boundary mass.  Because the trace space is the restriction of the P1
    space, ``B`` is exactly ``M_i`` injected into the GammaI vertex rows.
    """
    trace = TraceSpace.from_mesh(mesh)
    if mesh.faces_with_tag(BoundaryTag.GAMMA_A).size == 0:
        raise MeshError("mesh has no GammaA face")
    dof_of = trace.dof_of_vertex()
    face_ids = mesh.faces_with_tag(BoundaryTag.GAMMA_I)
    faces_local = dof_of[mesh.faces[face_ids]]
    lens = mesh.face_lengths[face_ids]
    local = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])
    vals = lens[:, None, None] * local[None, :, :]
    rows = np.repeat(faces_local, 2, axis=1).ravel()
    cols = np.tile(faces_local, (1, 2)).ravel()
    m = trace.n_dofs
    M_i = sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(m, m)).tocsr()
    full_rows = np.repeat(mesh.faces[face_ids], 2, axis=1).ravel()
    B = sp.coo_matrix((vals.ravel(), (full_rows, cols)),
                      shape=(mesh.n_vertices, m)).tocsr()
    M_a = _boundary_mass(mesh, BoundaryTag.GAMMA_A)
    return M_i, B, M_a


def interpolate(fun, space) -> "FeFunction | TraceFunction":
    """Nodal (Lagrange) interpolation of a callable onto a space."""
    if isinstance(space, TraceSpace):
        pts = space.mesh.vertices[space.vertex_ids]
        vals = _eval_data(fun, pts[:, 0], pts[:, 1], "interpolated data")
        return TraceFunction(space, vals)
    pts = space.mesh.vertices
    vals = _eval_data(fun, pts[:, 0], pts[:, 1], "interpolated data")
    return FeFunction(space, vals)


def transfer(fun: FeFunction, fine_mesh: Mesh) -> FeFunction:
    """Exact prolongation of a P1 function to a descendant mesh.

    Old vertices keep their values and every bisection midpoint receives the
    average of its parent edge endpoints, so the transferred function is the
    same function on the domain.
    """
    coarse = fun.mesh
    _check_descendant(coarse, fine_mesh)
    nc = coarse.n_vertices
    out = np.empty(fine_mesh.n_vertices)
    out[:nc] = fun.values
    parents = fine_mesh.vertex_parents
    for v in range(nc, fine_mesh.n_vertices):
        a, b = parents[v]
        out[v] = 0.5 * (out[a] + out[b])
    return FeFunction(FeSpace(fine_mesh), out)


def transfer_trace(fun: TraceFunction, fine_mesh: Mesh) -> TraceFunction:
    """Prolongation of a GammaI trace function to a descendant mesh."""
    coarse = fun.mesh
    embedded = np.zeros(coarse.n_vertices)
    embedded[fun.space.vertex_ids] = fun.values
    fine_full = transfer(FeFunction(FeSpace(coarse), embedded), fine_mesh)
    fine_trace = TraceSpace.from_mesh(fine_mesh)
    return TraceFunction(fine_trace, fine_full.values[fine_trace.vertex_ids])


def _check_descendant(coarse: Mesh, fine: Mesh):
    if fine is coarse:
        return
    ok = (fine.root == coarse.root
          and fine.level >= coarse.level
          and fine.n_vertices >= coarse.n_vertices
          and np.array_equal(fine.vertices[:coarse.n_vertices], coarse.vertices))
    if ok:
        parents = fine.vertex_parents[coarse.n_vertices:]
        ok = parents.size == 0 or (
            parents.min() >= 0
            and np.all(parents.max(axis=1)
                       < np.arange(coarse.n_vertices, fine.n_vertices)))
    if not ok:
        raise ValueError("target mesh is not a bisection descendant "
                         "of the function's mesh")


def l2_norm(fun: FeFunction) -> float:
    """Exact L2(Omega) norm of a P1 function."""
    vals = fun.values[fun.mesh.triangles]
    areas = fun.mesh.areas()
    integ = areas / 12.0 * (vals.sum(axis=1) ** 2 + (vals ** 2).sum(axis=1))
    return float(np.sqrt(integ.sum()))


def h1_seminorm(fun: FeFunction) -> float:
    grads = element_gradients(fun)
    areas = fun.mesh.areas()
    return float(np.sqrt((areas * (grads ** 2).sum(axis=1)).sum()))


def h1_norm(fun: FeFunction) -> float:
    return float(np.sqrt(l2_norm(fun) ** 2 + h1_seminorm(fun) ** 2))


def boundary_l2(fun: FeFunction, tag: BoundaryTag) -> float:
    """Exact L2 norm of the trace over faces with the given tag."""
    mesh = fun.mesh
    face_ids = mesh.faces_with_tag(tag)
    if face_ids.size == 0:
        return 0.0
    va = fun.values[mesh.faces[face_ids, 0]]
    vb = fun.values[mesh.faces[face_ids, 1]]
    lens = mesh.face_lengths[face_ids]
    integ = lens / 6.0 * 2.0 * (va ** 2 + vb ** 2 + va * vb)
    return float(np.sqrt(integ.sum()))


def trace_l2(fun: TraceFunction) -> float:
    """Exact L2(GammaI) norm of a trace function."""
    mesh = fun.mesh
    dof_of = fun.space.dof_of_vertex()
    face_ids = mesh.faces_with_tag(BoundaryTag.GAMMA_I)
    fl = dof_of[mesh.faces[face_ids]]
    va = fun.values[fl[:, 0]]
    vb = fun.values[fl[:, 1]]
    lens = mesh.face_lengths[face_ids]
    integ = lens / 6.0 * 2.0 * (va ** 2 + vb ** 2 + va * vb)
    return float(np.sqrt(integ.sum()))


def norms(fun) -> dict:
    """All applicable norms of a function as a name -> value dict."""
    if isinstance(fun, TraceFunction):
        return {"l2_gamma_i": trace_l2(fun)}
    return {
        "l2": l2_norm(fun),
        "h1_semi": h1_seminorm(fun),
        "h1": h1_norm(fun),
        "l2_gamma_a": boundary_l2(fun, BoundaryTag.GAMMA_A),
        "l2_gamma_i": boundary_l2(fun, BoundaryTag.GAMMA_I),
    }
