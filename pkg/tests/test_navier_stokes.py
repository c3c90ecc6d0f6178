import csv
from dataclasses import replace

import numpy as np
import pytest

from oseen_spg.assembly import DiscreteSolution, OseenAssembler, ProblemData, solve_oseen
from oseen_spg.mesh import build_unit_square
from oseen_spg.navier_stokes import (PicardConfig, PicardError, PicardHistory, nse_estimate,
                                     nse_parameters, picard_solve, spg_nse_norm)
from oseen_spg.problems import problem_nse_smooth
from oseen_spg.spaces import FEFunction, SpacePair, interpolate
from polynomials import polynomial_problem, zero_field


def test_parameter_rule():
    mesh = build_unit_square(2)
    h = mesh.diameters()
    p = nse_parameters("inf-sup", mesh)
    assert np.allclose(p.delta, 0.5 * h ** 2) and np.allclose(p.mu, 0.5)
    p = nse_parameters("equal-order", mesh)
    assert np.allclose(p.delta, 0.5 * h ** 2) and np.allclose(p.mu, 0.5 * h)
    with pytest.raises(ValueError):
        nse_parameters("other", mesh)


def test_config_validation():
    with pytest.raises(ValueError):
        PicardConfig(tol=0.0)
    with pytest.raises(ValueError):
        PicardConfig(initial="newton")
    with pytest.raises(ValueError):
        PicardConfig(relaxation=1.5)


@pytest.mark.parametrize("initial", ["stokes", "zero"])
def test_zero_problem_converges_immediately(initial):
    mesh = build_unit_square(2)
    space = SpacePair.from_name("P2/P1")
    data = ProblemData(nu=0.01, b=zero_field, f=zero_field)
    sol, hist = picard_solve(mesh, space, data, nse_parameters(space.kind, mesh),
                             PicardConfig(initial=initial))
    assert hist.converged and hist.iterations <= 1
    assert not np.any(sol.vector())


def test_frozen_convection_is_one_oseen_solve():
    mesh = build_unit_square(3)
    space = SpacePair.from_name("P2/P1")
    data = problem_nse_smooth(0.01)
    params = nse_parameters(space.kind, mesh)
    asm = OseenAssembler(mesh, space)
    b = interpolate(asm.dofmap_u, data.exact.u)
    sol, hist = picard_solve(mesh, space, data, params, assembler=asm, frozen_b=b)
    ref = solve_oseen(mesh, space, ProblemData(nu=data.nu, b=b, f=data.f, dirichlet=data.dirichlet),
                      params, assembler=asm)
    assert hist.iterations == 0
    assert np.max(np.abs(sol.vector() - ref.vector())) <= 1e-12 * np.max(np.abs(ref.vector()))


def test_manufactured_problem_converges():
    mesh = build_unit_square(2)
    space = SpacePair.from_name("P2/P1")
    data = problem_nse_smooth(0.01)
    sol, hist = picard_solve(mesh, space, data, nse_parameters(space.kind, mesh),
                             PicardConfig(max_iter=500))
    assert hist.converged and hist.residuals[-1] < 1e-10
    # the returned iterate satisfies the nonlinear system
    asm = OseenAssembler(mesh, space)
    system = asm.system(replace(data, sigma=0.0, sigma0=0.0), sol.params, b=sol.u)
    x = np.append(sol.vector(), sol.multiplier)
    assert np.linalg.norm(system.matrix @ x - system.rhs) < 1e-10


def test_stalled_iteration_raises_with_history():
    mesh = build_unit_square(2)
    space = SpacePair.from_name("P2/P1")
    data = problem_nse_smooth(0.01)
    with pytest.raises(PicardError) as info:
        picard_solve(mesh, space, data, nse_parameters(space.kind, mesh), PicardConfig(max_iter=2))
    assert len(info.value.history.residuals) == 3
    assert not info.value.history.converged


def test_history_helpers(tmp_path):
    hist = PicardHistory([1.0, 2.0, 0.5, 0.4, 0.3, 0.2], converged=True)
    assert hist.iterations == 5
    assert hist.monotone_after(3)
    assert not PicardHistory([1, 1, 1, 1, 0.5, 0.6]).monotone_after(3)
    path = tmp_path / "h.csv"
    hist.write_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iteration", "residual"] and len(rows) == 7
    assert float(rows[3][1]) == 0.5


def test_nse_norm_of_constant_pressure_error():
    mesh = build_unit_square(2)
    space = SpacePair.from_name("P2/P1")
    nu, c = 0.04, 0.7
    data = polynomial_problem(2, nu)
    params = nse_parameters(space.kind, mesh)
    asm = OseenAssembler(mesh, space)
    u = interpolate(asm.dofmap_u, data.exact.u)
    p = interpolate(asm.dofmap_p, data.exact.p)
    sol = DiscreteSolution(mesh, space, u, FEFunction(p.dofmap, p.coefficients - c), params)
    norm = spg_nse_norm(sol, data, params)
    assert abs(norm.total - np.sqrt(nu) * c) <= 1e-12
    exact_sol = DiscreteSolution(mesh, space, u, p, params)
    assert spg_nse_norm(exact_sol, data, params).total <= 1e-12


def test_nse_estimate_zero():
    mesh = build_unit_square(2)
    space = SpacePair.from_name("P2/P2")
    params = nse_parameters(space.kind, mesh)
    asm = OseenAssembler(mesh, space)
    sol = asm.solution(params, np.zeros(asm.n_unknowns))
    est = nse_estimate(sol, ProblemData(nu=0.01, b=zero_field, f=zero_field))
    assert est.eta == 0.0


def test_nse_estimate_uses_discrete_velocity():
    mesh = build_unit_square(2)
    space = SpacePair.from_name("P2/P1")
    data = problem_nse_smooth(0.01)
    sol, _ = picard_solve(mesh, space, data, nse_parameters(space.kind, mesh),
                          PicardConfig(max_iter=500))
    est = nse_estimate(sol, data)
    # data.b plays no role: the convection is u_h
    other = nse_estimate(sol, replace(data, b=zero_field))
    assert np.isclose(est.eta, other.eta, rtol=1e-14)
    assert est.eta > 0
