from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial.legendre import leggauss

from oseen_spg.assembly import (ExactSolution, OseenAssembler, ProblemData, select_parameters,
                                solve_oseen)
from oseen_spg.estimator import (ErrorEstimate, cell_residual, effectivity, estimate,
                                 facet_residual, hypothesis_diagnostics, spg_error_norm)
from oseen_spg.mesh import build_unit_square
from oseen_spg.problems import problem_oseen_smooth
from oseen_spg.quadrature import make_quadrature
from oseen_spg.spaces import FEFunction, PointSet, SpacePair, interpolate
from polynomials import polynomial_problem, zero_field


def linear_b(x):
    return np.column_stack([1 + x[:, 0], 0.5 - x[:, 1]])


def linear_sigma(x):
    return 1 + x[:, 0]


def zero_solution(mesh, pair, nu=1e-3):
    space = SpacePair.from_name(pair)
    params = select_parameters(space.kind, mesh, nu)
    asm = OseenAssembler(mesh, space)
    return asm.solution(params, np.zeros(asm.n_unknowns)), params


@pytest.fixture(scope="module")
def smooth_p2p1():
    mesh = build_unit_square(2)
    space = SpacePair.from_name("P2/P1")
    data = problem_oseen_smooth(1e-5)
    params = select_parameters(space.kind, mesh, data.nu, sigma_inf=1.0)
    return data, solve_oseen(mesh, space, data, params)


@pytest.fixture(scope="module")
def representable():
    """P2/P1 solve of a problem whose solution lies in the discrete spaces."""
    mesh = build_unit_square(2)
    space = SpacePair.from_name("P2/P1")
    data = polynomial_problem(2, 1e-2, linear_b, linear_sigma, sigma0=1.0)
    params = select_parameters(space.kind, mesh, data.nu, sigma_inf=2.0)
    return data, solve_oseen(mesh, space, data, params)


def test_zero_data_zero_estimate():
    mesh = build_unit_square(2)
    sol, params = zero_solution(mesh, "P2/P1")
    data = ProblemData(nu=1e-3, b=linear_b, f=zero_field)
    est = estimate(sol, data, params)
    assert est.eta == 0.0


def test_cell_residual_of_zero_solution_is_f():
    mesh = build_unit_square(1)
    sol, _ = zero_solution(mesh, "P2/P1")
    data = problem_oseen_smooth(1e-3)
    ps = PointSet.quadrature(mesh, make_quadrature(4).points)
    assert np.array_equal(cell_residual(sol, data, ps), data.f(ps.x))


def test_p1_cell_residual_has_no_laplacian():
    mesh = build_unit_square(2)
    space = SpacePair.from_name("P1/P1")
    data = problem_oseen_smooth(0.3)
    params = select_parameters(space.kind, mesh, data.nu, sigma_inf=1.0)
    sol = solve_oseen(mesh, space, data, params)
    ps = PointSet.quadrature(mesh, make_quadrature(4).points)
    expected = (data.f(ps.x) - np.einsum("ncj,nj->nc", sol.u.gradients(ps), data.b(ps.x))
                - sol.u.values(ps) - sol.p.gradients(ps))
    assert np.allclose(cell_residual(sol, data, ps), expected, rtol=0, atol=1e-12)


def test_residuals_vanish_for_representable_solution(representable):
    data, sol = representable
    est = estimate(sol, data)
    assert np.sqrt(est.extras["r_sq"].max()) <= 1e-9
    assert spg_error_norm(sol, data).total <= 1e-9
    # the continuous part of the flux is exact, so interior jumps vanish too
    assert np.sqrt(est.extras["rF_sq"].max()) <= 1e-9


def test_linear_fields_have_no_interior_jump():
    mesh = build_unit_square(2)
    sol, _ = zero_solution(mesh, "P1/P1")
    u = interpolate(sol.u.dofmap, lambda x: np.column_stack([2 * x[:, 0] - x[:, 1], x[:, 1]]))
    p = interpolate(sol.p.dofmap, lambda x: 3 * x[:, 0])
    sol = replace(sol, u=u, p=p)
    data = ProblemData(nu=0.1, b=linear_b, f=zero_field)
    t = make_quadrature(4).edge_points
    r = facet_residual(sol, data, mesh.interior_facets, t)
    assert np.max(np.abs(r)) <= 1e-14


def test_dirichlet_facets_have_zero_residual(smooth_p2p1):
    data, sol = smooth_p2p1
    t = make_quadrature(4).edge_points
    r = facet_residual(sol, data, sol.mesh.boundary_facets, t)
    assert np.all(r == 0.0)


def test_hand_computed_jump_on_two_cells():
    mesh = build_unit_square(0)
    sol, _ = zero_solution(mesh, "P1/P1")
    # hat function of the vertex (1, 0): x - y on the lower cell, 0 on the upper one
    corner = int(np.flatnonzero(np.all(mesh.vertices == [1.0, 0.0], axis=1))[0])
    coef = np.zeros_like(sol.u.coefficients)
    coef[0, corner] = 1.0
    sol = replace(sol, u=FEFunction(sol.u.dofmap, coef))
    nu = 0.1
    data = ProblemData(nu=nu, b=zero_field, f=zero_field)
    t = np.linspace(0.0, 1.0, 5)
    r = facet_residual(sol, data, mesh.interior_facets, t)
    assert np.allclose(r[0, :, 0], nu * np.sqrt(2.0), rtol=1e-14)
    assert np.allclose(r[0, :, 1], 0.0, atol=1e-15)
    est = estimate(sol, data)
    f = mesh.interior_facets[0]
    assert np.isclose(est.extras["rF_sq"][f], 2 * nu ** 2 * np.sqrt(2.0), rtol=1e-13)


def test_eta_is_sum_of_contributions(smooth_p2p1):
    data, sol = smooth_p2p1
    est = estimate(sol, data)
    total = (est.res_sq.sum() + est.delta_sq.sum() + est.mu_sq.sum() + est.facet_sq.sum()
             + est.div_share.sum())
    assert abs(total - est.eta ** 2) <= 1e-13 * est.eta ** 2
    assert abs(sum(c ** 2 for c in est.components.values()) - est.eta_sq) <= 1e-13 * est.eta_sq
    for arr in (est.res_sq, est.delta_sq, est.mu_sq, est.facet_sq, est.div_share):
        assert np.all(arr >= 0)


def _scaled(data, s):
    ex = data.exact
    exact = ExactSolution(lambda x: s * ex.u(x), lambda x: s * ex.grad_u(x),
                          lambda x: s * ex.lap_u(x), lambda x: s * ex.p(x),
                          lambda x: s * ex.grad_p(x))
    return replace(data, f=lambda x: s * data.f(x), dirichlet=lambda x: s * data.dirichlet(x),
                   exact=exact)


@pytest.mark.parametrize("pair", ["P1/P1", "P2/P1", "P3/P3"])
def test_scaling_by_three(pair):
    mesh = build_unit_square(2)
    space = SpacePair.from_name(pair)
    data = problem_oseen_smooth(1e-4)
    params = select_parameters(space.kind, mesh, data.nu, sigma_inf=1.0)
    data3 = _scaled(data, 3.0)
    sol = solve_oseen(mesh, space, data, params)
    sol3 = solve_oseen(mesh, space, data3, params)
    assert np.allclose(sol3.vector(), 3 * sol.vector(), rtol=1e-12, atol=1e-12)
    est, est3 = estimate(sol, data), estimate(sol3, data3)
    assert abs(est3.eta - 3 * est.eta) <= 1e-12 * est3.eta
    for key, value in est.components.items():
        assert abs(est3.components[key] - 3 * value) <= 1e-12 * max(est3.eta, 1e-300)
    err, err3 = spg_error_norm(sol, data).total, spg_error_norm(sol3, data3).total
    assert abs(err3 - 3 * err) <= 1e-12 * err3


@settings(max_examples=25, deadline=None)
@given(sigma0=st.floats(0.0, 10.0), nu=st.floats(1e-6, 1.0),
       grow=st.floats(1.0, 100.0), which=st.sampled_from(["sigma0", "nu"]))
def test_min_brackets_monotone(smooth_p2p1, sigma0, nu, grow, which):
    data, sol = smooth_p2p1
    base = replace(data, nu=nu, sigma0=sigma0)
    if which == "nu":
        bigger = replace(base, nu=nu * grow)
    else:
        bigger = replace(base, sigma0=max(sigma0, 1e-3) * grow)
    weights = []
    for d in (base, bigger):
        est = estimate(sol, d)
        x = est.extras
        weights.append((est.res_sq / x["r_sq"], est.facet_sq[x["rF_sq"] > 0] / x["rF_sq"][x["rF_sq"] > 0]))
    assert np.all(weights[1][0] <= weights[0][0] * (1 + 1e-14))
    assert np.all(weights[1][1] <= weights[0][1] * (1 + 1e-14))


def _oracle_spg(sol, data, params):
    """Error norm by a plain loop with barycentric P1 evaluation."""
    mesh = sol.mesh
    t, w = leggauss(10)
    t, w = 0.5 * (t + 1), 0.5 * w
    U, Pc = sol.u.coefficients, sol.p.coefficients
    parts = dict.fromkeys(["viscous", "reaction", "graddiv", "supg"], 0.0)
    for K, cell in enumerate(mesh.cells):
        X = mesh.vertices[cell]
        area = 0.5 * abs(np.linalg.det(np.column_stack([X[1] - X[0], X[2] - X[0]])))
        G = np.linalg.inv(np.vstack([np.ones(3), X.T]))[:, 1:]
        grad_uh = U[:, cell] @ G
        grad_ph = Pc[cell] @ G
        for a, wa in zip(t, w):
            for b, wb in zip(t, w):
                r = np.array([a, (1 - a) * b])
                L = np.array([1 - r.sum(), r[0], r[1]])
                x = (L @ X)[None]
                wq = 2 * area * wa * wb * (1 - a)
                eu = data.exact.u(x)[0] - U[:, cell] @ L
                geu = data.exact.grad_u(x)[0] - grad_uh
                gep = data.exact.grad_p(x)[0] - grad_ph
                bq = data.b(x)[0]
                parts["viscous"] += wq * data.nu * np.sum(geu ** 2)
                parts["reaction"] += wq * data.sigma(x)[0] * eu @ eu
                parts["graddiv"] += wq * params.mu[K] * np.trace(geu) ** 2
                s = geu @ bq + gep
                parts["supg"] += wq * params.delta[K] * s @ s
    return parts


def test_spg_norm_matches_plain_loop():
    mesh = build_unit_square(0)
    space = SpacePair.from_name("P1/P1")
    data = polynomial_problem(2, 0.05, linear_b, linear_sigma, sigma0=1.0)
    params = select_parameters(space.kind, mesh, data.nu, sigma_inf=2.0)
    sol = solve_oseen(mesh, space, data, params)
    norm = spg_error_norm(sol, data)
    ref = _oracle_spg(sol, data, params)
    assert norm.total > 1e-3
    for key, value in ref.items():
        assert abs(norm.constituents[key] - value) <= 1e-12 * norm.total_sq
    assert abs(norm.total_sq - sum(ref.values())) <= 1e-12 * norm.total_sq


def test_effectivity_arithmetic():
    z = np.zeros(1)
    est = ErrorEstimate(np.array([8.1e-5]), z, z, z, 0.0, z)
    assert np.isclose(effectivity(est, 1e-3), 9.0, rtol=1e-14)
    with pytest.raises(ValueError):
        effectivity(est, 0.0)


def test_missing_exact_solution():
    mesh = build_unit_square(1)
    sol, _ = zero_solution(mesh, "P2/P1")
    with pytest.raises(ValueError):
        spg_error_norm(sol, ProblemData(nu=1.0, b=zero_field, f=zero_field))


def test_interpolation_hypothesis_exact_case(representable):
    data, sol = representable
    hyp = hypothesis_diagnostics(sol, data)
    assert hyp.checks["L2_delta"][0] <= 1e-24
    assert hyp.checks["H1_delta"][0] <= 1e-24
    assert hyp.trailing <= 1e-24


def test_hypothesis_report_is_finite(smooth_p2p1):
    data, sol = smooth_p2p1
    hyp = hypothesis_diagnostics(sol, data)
    values = np.array([v for pair in hyp.checks.values() for v in pair] + [hyp.trailing])
    assert np.all(np.isfinite(values)) and np.all(values >= 0)
