import numpy as np
import pytest

from fluxrec.estimator import (
    element_residuals,
    estimate,
    face_jumps,
    global_estimator,
    oscillations,
)
from fluxrec.fem import (
    FeFunction,
    FeSpace,
    TraceFunction,
    TraceSpace,
    interpolate,
)
from fluxrec.mesh import BoundaryTag, build_initial_mesh
from fluxrec.solver import OptimalTriplet, ProblemData, solve_optimality

from helpers import brute_force_indicators, monomial_integral_ref_triangle


def make_triplet(mesh, u_vals=None, p_vals=None, q_vals=None):
    space = FeSpace(mesh)
    trace = TraceSpace.from_mesh(mesh)
    u = FeFunction(space, u_vals if u_vals is not None
                   else np.zeros(space.n_dofs))
    p = FeFunction(space, p_vals if p_vals is not None
                   else np.zeros(space.n_dofs))
    q = TraceFunction(trace, q_vals if q_vals is not None
                      else np.zeros(trace.n_dofs))
    return OptimalTriplet(u=u, p=p, q=q)


def zero_data(coeffs):
    return ProblemData(coeffs=coeffs,
                       f=lambda x, y: 0.0 * x,
                       u_a=lambda x, y: 0.0 * x,
                       z=lambda x, y: 0.0 * x)


class TestElementResiduals:
    def test_zero_source(self, refined_square, smooth_problem):
        triplet = make_triplet(refined_square)
        r1, r2 = element_residuals(triplet, lambda x, y: 0.0 * x)
        assert np.abs(r1).max() == 0.0
        assert np.abs(r2).max() == 0.0

    def test_costate_residual_always_zero(self, refined_square):
        rng = np.random.default_rng(0)
        triplet = make_triplet(
            refined_square,
            u_vals=rng.standard_normal(refined_square.n_vertices),
            p_vals=rng.standard_normal(refined_square.n_vertices))
        _, r2 = element_residuals(triplet, lambda x, y: x + y)
        assert np.abs(r2).max() == 0.0

    def test_linear_source_norm(self, smooth_problem):
        # || f ||^2 over the reference triangle with f = x equals 1/12
        import fluxrec.fem as fem
        from fluxrec.mesh import Mesh

        mesh = Mesh(
            vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
            triangles=np.array([[0, 1, 2]]),
            refinement_edge=np.array([0]),
            boundary_tags={(0, 1): BoundaryTag.GAMMA_I,
                           (0, 2): BoundaryTag.GAMMA_A,
                           (1, 2): BoundaryTag.GAMMA_A},
        )
        triplet = make_triplet(mesh)
        r1, _ = element_residuals(triplet, lambda x, y: x)
        area = mesh.areas()[0]
        norm_sq = float((area / 3.0 * r1 ** 2).sum())
        assert np.isclose(norm_sq, monomial_integral_ref_triangle(2, 0),
                          rtol=1e-13)


class TestFaceJumps:
    def test_global_linear_state_no_interior_jump(self, refined_square,
                                                  smooth_problem):
        u = interpolate(lambda x, y: x, FeSpace(refined_square))
        triplet = make_triplet(refined_square, u_vals=u.values)
        j1, _, _ = face_jumps(triplet, zero_data(smooth_problem.coeffs))
        interior = refined_square.faces_with_tag(BoundaryTag.INTERIOR)
        assert np.abs(j1[interior]).max() < 1e-12

    def test_gamma_i_zero_state_zero_flux(self, refined_square,
                                          smooth_problem):
        triplet = make_triplet(refined_square)
        j1, _, _ = face_jumps(triplet, zero_data(smooth_problem.coeffs))
        gi = refined_square.faces_with_tag(BoundaryTag.GAMMA_I)
        assert np.abs(j1[gi]).max() == 0.0

    def test_gamma_a_robin_residual_by_hand(self, smooth_problem):
        # u = y, alpha = gamma = 1, u_a = 0 on the top face y=1:
        # J1 = 0 - gamma*u - alpha du/dn = -1 - 1 = -2 at every point
        mesh = build_initial_mesh("square", "bottom")
        u = interpolate(lambda x, y: y, FeSpace(mesh))
        triplet = make_triplet(mesh, u_vals=u.values)
        j1, _, _ = face_jumps(triplet, zero_data(smooth_problem.coeffs))
        top = [f for f in mesh.faces_with_tag(BoundaryTag.GAMMA_A)
               if np.allclose(mesh.vertices[mesh.faces[f], 1], 1.0)]
        assert len(top) == 1
        assert np.allclose(j1[top[0]], -2.0)

    def test_weights_sum_to_one(self, refined_square, smooth_problem):
        triplet = make_triplet(refined_square)
        _, _, w = face_jumps(triplet, zero_data(smooth_problem.coeffs))
        assert np.allclose(w.sum(axis=1), 1.0)


class TestEstimate:
    def test_zero_problem_zero_estimator(self, refined_square,
                                         smooth_problem):
        triplet = make_triplet(refined_square)
        ind = estimate(triplet, zero_data(smooth_problem.coeffs))
        assert ind.eta == 0.0
        assert ind.osc == 0.0

    def test_matches_brute_force(self, smooth_system, settings):
        triplet = solve_optimality(smooth_system, settings)
        ind = estimate(triplet, smooth_system.data)
        eta1_bf, eta2_bf = brute_force_indicators(triplet, smooth_system.data)
        assert np.allclose(ind.eta1_sq, eta1_bf, rtol=1e-12, atol=1e-15)
        assert np.allclose(ind.eta2_sq, eta2_bf, rtol=1e-12, atol=1e-15)

    def test_quadratic_homogeneity(self, smooth_system, settings):
        triplet = solve_optimality(smooth_system, settings)
        ind1 = estimate(triplet, smooth_system.data)

        data = smooth_system.data
        doubled = ProblemData(
            coeffs=data.coeffs,
            f=lambda x, y: 2.0 * data.f(x, y),
            u_a=lambda x, y: 2.0 * data.u_a(x, y),
            z=lambda x, y: 2.0 * data.z(x, y))
        scaled = OptimalTriplet(
            u=FeFunction(triplet.u.space, 2.0 * triplet.u.values),
            p=FeFunction(triplet.p.space, 2.0 * triplet.p.values),
            q=TraceFunction(triplet.q.space, 2.0 * triplet.q.values))
        ind2 = estimate(scaled, doubled)
        assert np.allclose(ind2.eta_sq, 4.0 * ind1.eta_sq, rtol=1e-12)

    def test_nonnegative_and_finite(self, smooth_system, settings):
        triplet = solve_optimality(smooth_system, settings)
        ind = estimate(triplet, smooth_system.data)
        for arr in (ind.eta1_sq, ind.eta2_sq, ind.osc_f_sq,
                    ind.osc_j1_sq, ind.osc_j2_sq):
            assert np.isfinite(arr).all()
            assert (arr >= 0.0).all()

    def test_global_parts_reproducible(self, smooth_system, settings):
        triplet = solve_optimality(smooth_system, settings)
        ind = estimate(triplet, smooth_system.data)
        assert np.isclose(ind.eta ** 2,
                          ind.eta1_sq.sum() + ind.eta2_sq.sum(), rtol=1e-12)


class TestOscillations:
    def test_constant_source_no_oscillation(self, smooth_system, settings):
        triplet = solve_optimality(smooth_system, settings)
        ind = estimate(triplet, smooth_system.data)  # f = 1 on this problem
        assert np.abs(ind.osc_f_sq).max() < 1e-15

    def test_constant_jump_no_face_oscillation(self, refined_square,
                                               smooth_problem):
        # global linear state: interior jumps vanish, GammaI jumps are
        # constant when q is constant, so those oscillations vanish
        trace = TraceSpace.from_mesh(refined_square)
        u = interpolate(lambda x, y: y, FeSpace(refined_square))
        triplet = make_triplet(
            refined_square, u_vals=u.values,
            q_vals=np.full(trace.n_dofs, 2.0))
        osc_f, osc_j1, osc_j2 = oscillations(
            triplet, zero_data(smooth_problem.coeffs))
        gi = refined_square.faces_with_tag(BoundaryTag.GAMMA_I)
        interior = refined_square.faces_with_tag(BoundaryTag.INTERIOR)
        assert np.abs(osc_j1[gi]).max() < 1e-15
        assert np.abs(osc_j1[interior]).max() < 1e-15

    def test_linear_source_oscillation_reference_triangle(self,
                                                          smooth_problem):
        from fluxrec.mesh import Mesh

        mesh = Mesh(
            vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
            triangles=np.array([[0, 1, 2]]),
            refinement_edge=np.array([0]),
            boundary_tags={(0, 1): BoundaryTag.GAMMA_I,
                           (0, 2): BoundaryTag.GAMMA_A,
                           (1, 2): BoundaryTag.GAMMA_A},
        )
        triplet = make_triplet(mesh)
        data = ProblemData(coeffs=smooth_problem.coeffs,
                           f=lambda x, y: x,
                           u_a=lambda x, y: 0.0 * x,
                           z=lambda x, y: 0.0 * x)
        ind = estimate(triplet, data)
        # exact: h_T^2 ||x - 1/3||^2 = 0.5 * (1/12 - 1/9 + 1/18) = 1/72
        exact = 0.5 * (monomial_integral_ref_triangle(2, 0)
                       - 2.0 / 3.0 * monomial_integral_ref_triangle(1, 0)
                       + (1.0 / 9.0) * monomial_integral_ref_triangle(0, 0))
        assert np.isclose(ind.osc_f_sq[0], exact, rtol=1e-13)

    def test_oscillation_below_norm(self, smooth_system, settings):
        """Computed with one quadrature, osc <= norm holds numerically."""
        triplet = solve_optimality(smooth_system, settings)
        ind = estimate(triplet, smooth_system.data)
        mesh = smooth_system.mesh
        from fluxrec.estimator import _FaceSamples

        fs = _FaceSamples(triplet, smooth_system.data)
        lengths = mesh.face_lengths
        assert np.all(ind.osc_j1_sq
                      <= lengths * fs.norm_sq(fs.j1, lengths) + 1e-15)
        assert np.all(ind.osc_j2_sq
                      <= lengths * fs.norm_sq(fs.j2, lengths) + 1e-15)


class TestGlobalEstimator:
    def test_empty_subset(self, smooth_system, settings):
        triplet = solve_optimality(smooth_system, settings)
        ind = estimate(triplet, smooth_system.data)
        assert global_estimator(ind, subset=[]) == 0.0

    def test_full_subset_equals_eta(self, smooth_system, settings):
        triplet = solve_optimality(smooth_system, settings)
        ind = estimate(triplet, smooth_system.data)
        full = range(smooth_system.mesh.n_triangles)
        assert np.isclose(global_estimator(ind, subset=full), ind.eta)
        assert np.isclose(global_estimator(ind), ind.eta)

    def test_additivity_over_disjoint_split(self, smooth_system, settings):
        triplet = solve_optimality(smooth_system, settings)
        ind = estimate(triplet, smooth_system.data)
        m = smooth_system.mesh.n_triangles
        first = list(range(m // 2))
        second = list(range(m // 2, m))
        total_sq = (global_estimator(ind, first) ** 2
                    + global_estimator(ind, second) ** 2)
        assert np.isclose(total_sq, ind.eta ** 2, rtol=1e-12)

    def test_out_of_range_subset(self, smooth_system, settings):
        triplet = solve_optimality(smooth_system, settings)
        ind = estimate(triplet, smooth_system.data)
        with pytest.raises(ValueError, match="out of range"):
            global_estimator(ind, subset=[10_000])
