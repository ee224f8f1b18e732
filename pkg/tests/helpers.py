"""Independent oracles used by the test suite.

These deliberately avoid the production code paths: plane coefficients come
from solving 3x3 linear systems, integrals of polynomials from the exact
monomial formula on the reference triangle, and the optimality system from
one dense monolithic solve.
"""

import math

import numpy as np

from fluxrec.mesh import BoundaryTag


def monomial_integral_ref_triangle(a: int, b: int) -> float:
    """Exact ``int x^a y^b`` over the triangle (0,0), (1,0), (0,1)."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def dense_optimality(system):
    """Solve the monolithic block optimality system densely.

    Block layout: state row ``A u + B q = F``, costate row
    ``-M_a u + A p = -Z``, stationarity row ``-B^T p + beta M_i q = 0``.
    Returns the nodal arrays ``(u, p, q)``.
    """
    A = system.A.toarray()
    Ma = system.M_a.toarray()
    Mi = system.M_i.toarray()
    B = system.B.toarray()
    n = A.shape[0]
    m = Mi.shape[0]
    K = np.zeros((2 * n + m, 2 * n + m))
    K[:n, :n] = A
    K[:n, 2 * n:] = B
    K[n:2 * n, :n] = -Ma
    K[n:2 * n, n:2 * n] = A
    K[2 * n:, n:2 * n] = -B.T
    K[2 * n:, 2 * n:] = system.beta * Mi
    rhs = np.concatenate([system.F, -system.Z, np.zeros(m)])
    sol = np.linalg.solve(K, rhs)
    return sol[:n], sol[n:2 * n], sol[2 * n:]


def plane_gradient(points, values):
    """Gradient of the plane through three (x, y, value) samples."""
    mat = np.column_stack([points, np.ones(3)])
    coef = np.linalg.solve(mat, values)
    return coef[:2]


def gauss_rule(npts):
    if npts == 2:
        return (np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]),
                np.array([0.5, 0.5]))
    if npts == 3:
        return (np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5,
                          0.5 + 0.5 * np.sqrt(0.6)]),
                np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0]))
    raise ValueError(npts)


def brute_force_indicators(triplet, data):
    """Face-first recomputation of the squared indicators.

    Loops over faces, integrates each jump with its own Gauss rule and
    scatters the contribution to the adjacent triangles; volume residual
    terms are added per triangle.  Matches the vectorized estimator up to
    floating-point reassociation.
    """
    mesh = triplet.mesh
    alpha = data.coeffs.alpha
    gamma = data.coeffs.gamma
    areas = mesh.areas()
    u = triplet.u.values
    p = triplet.p.values
    q = triplet.q.values
    dof_of = triplet.q.space.dof_of_vertex()

    grads_u = np.empty((mesh.n_triangles, 2))
    grads_p = np.empty((mesh.n_triangles, 2))
    for t in range(mesh.n_triangles):
        pts = mesh.vertices[mesh.triangles[t]]
        grads_u[t] = plane_gradient(pts, u[mesh.triangles[t]])
        grads_p[t] = plane_gradient(pts, p[mesh.triangles[t]])

    eta1 = np.zeros(mesh.n_triangles)
    eta2 = np.zeros(mesh.n_triangles)

    for f in range(mesh.n_faces):
        va, vb = mesh.faces[f]
        pa, pb = mesh.vertices[va], mesh.vertices[vb]
        length = np.linalg.norm(pb - pa)
        normal = mesh.face_normals[f]
        tag = BoundaryTag(int(mesh.face_tags[f]))
        t0, t1 = mesh.face_tris[f]
        ts, ws = gauss_rule(3 if tag == BoundaryTag.GAMMA_A else 2)
        j1_sq = 0.0
        j2_sq = 0.0
        for t_par, w in zip(ts, ws):
            x, y = pa + t_par * (pb - pa)
            if tag == BoundaryTag.INTERIOR:
                j1 = alpha * (grads_u[t0] - grads_u[t1]) @ normal
                j2 = alpha * (grads_p[t0] - grads_p[t1]) @ normal
            elif tag == BoundaryTag.GAMMA_A:
                uh = u[va] * (1 - t_par) + u[vb] * t_par
                ph = p[va] * (1 - t_par) + p[vb] * t_par
                j1 = (gamma * float(data.u_a(x, y)) - gamma * uh
                      - alpha * grads_u[t0] @ normal)
                j2 = (uh - float(data.z(x, y)) - gamma * ph
                      - alpha * grads_p[t0] @ normal)
            else:
                qh = (q[dof_of[va]] * (1 - t_par) + q[dof_of[vb]] * t_par)
                j1 = -qh - alpha * grads_u[t0] @ normal
                j2 = -alpha * grads_p[t0] @ normal
            j1_sq += w * j1 ** 2
            j2_sq += w * j2 ** 2
        contrib1 = length * (length * j1_sq)  # h_F * ||J1||^2
        contrib2 = length * (length * j2_sq)
        for t in (t0, t1):
            if t >= 0:
                eta1[t] += contrib1
                eta2[t] += contrib2

    for t in range(mesh.n_triangles):
        pts = mesh.vertices[mesh.triangles[t]]
        r_sq = 0.0
        for i, j in ((0, 1), (1, 2), (2, 0)):
            mx, my = 0.5 * (pts[i] + pts[j])
            r_sq += areas[t] / 3.0 * float(data.f(mx, my)) ** 2
        eta1[t] += areas[t] * r_sq

    return eta1, eta2
