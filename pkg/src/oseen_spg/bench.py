"""Convergence and adaptivity studies on the manufactured benchmarks."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .adaptivity import AdaptiveConfig, AdaptiveError, adaptive_loop
from .assembly import select_parameters, solve_oseen, sup_norm
from .estimator import estimate, hypothesis_diagnostics, spg_error_norm
from .mesh import build_unit_square
from .navier_stokes import PicardConfig, PicardError, nse_estimate, nse_parameters, picard_solve
from .navier_stokes import spg_nse_norm
from .problems import PROBLEMS
from .solver import SolverError
from .spaces import PAIRS, DofMap, SpacePair

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["problem", "pair", "nu", "level", "dofs", "err_spg", "eta", "eta_res", "eta_div",
               "eta_F", "eta_delta", "eta_mu", "effectivity", "order"]
COMPONENT_COLUMNS = {"res": "eta_res", "div": "eta_div", "F": "eta_F", "delta": "eta_delta",
                     "mu": "eta_mu"}


@dataclass
class BenchmarkSpec:
    problem: str = "oseen-smooth"
    pairs: list = field(default_factory=lambda: ["P2/P1"])
    nus: list = field(default_factory=lambda: [1e-5])
    # uniform: levels min_level..levels; adaptive: steps 0..levels from
    # the uniform mesh of level min_level
    levels: int = 4
    min_level: int = 1
    adaptive: bool = False
    strategy: str = "maximum"
    theta: float = 0.5
    dof_budget: int = 300_000
    out: str = "results"
    vtk: bool = False
    quad_degree: int | None = None
    c_inv: float = 1.0
    solver_tol: float = 1e-12
    picard_tol: float = 1e-10
    picard_max_iter: int = 100
    picard_relaxation: float = 1.0
    hypotheses: bool = True

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        self.pairs = [SpacePair.from_name(p).name for p in self.pairs]
        self.nus = [float(nu) for nu in self.nus]
        if any(not nu > 0.0 for nu in self.nus):
            raise ValueError("viscosities must be positive")
        if self.adaptive and self.problem == "nse-smooth":
            raise ValueError("adaptive refinement is only wired for the Oseen problems")
        if self.min_level < 0 or self.levels < 0:
            raise ValueError("levels must be non-negative")
        if not self.adaptive and self.min_level > self.levels:
            raise ValueError("min_level exceeds levels")


@dataclass
class LevelResult:
    """One report row plus the diagnostics that only go to JSON."""

    row: dict
    extra: dict = field(default_factory=dict)


def _nan_row(spec, pair, nu, level, dofs=math.nan):
    row = dict.fromkeys(CSV_COLUMNS, math.nan)
    row.update(problem=spec.problem, pair=pair, nu=nu, level=level, dofs=dofs)
    return row


def _fill(row, est, err):
    row["err_spg"] = err
    row["eta"] = est.eta
    for key, col in COMPONENT_COLUMNS.items():
        row[col] = est.components[key]
    row["effectivity"] = est.eta / err if err > 0 else math.nan


def _vtk(spec, sol, est, indicators, stem):
    mesh = sol.mesh
    nv = mesh.n_vertices
    cell = {"h": mesh.diameters(), "eta_res": np.sqrt(est.res_sq),
            "eta_delta": np.sqrt(est.delta_sq), "eta_mu": np.sqrt(est.mu_sq)}
    if indicators is not None:
        cell["indicator"] = indicators
    point = {"u1": sol.u.coefficients[0, :nv], "u2": sol.u.coefficients[1, :nv],
             "p": sol.p.coefficients[:nv]}
    mesh.write_vtk(os.path.join(spec.out, stem + ".vtk"), cell, point)


def _stem(spec, pair, nu, level):
    return f"{spec.problem}_{pair.replace('/', '')}_nu{nu:g}_L{level}"


def _oseen_level(spec, space, data, mesh, level):
    sigma_inf = sup_norm(data.sigma, mesh)
    params = select_parameters(space.kind, mesh, data.nu, c_inv=spec.c_inv, sigma_inf=sigma_inf)
    sol = solve_oseen(mesh, space, data, params, quad_degree=spec.quad_degree, tol=spec.solver_tol)
    est = estimate(sol, data, params, quad_degree=spec.quad_degree)
    norm = spg_error_norm(sol, data, params, quad_degree=spec.quad_degree)
    row = _nan_row(spec, space.name, data.nu, level, sol.n_dofs)
    _fill(row, est, norm.total)
    extra = {"cells": mesh.n_cells, "norm": norm.constituents, "norm_kind": "spg",
             "spg_p": norm.spg_p, "admissible": params.all_admissible}
    if spec.hypotheses and spec.problem == "oseen-smooth":
        hyp = hypothesis_diagnostics(sol, data, params, quad_degree=spec.quad_degree,
                                     error_norm=norm)
        extra["hypotheses"] = {k: {"lhs": a, "rhs": b, "holds": a <= b}
                               for k, (a, b) in hyp.checks.items()}
        extra["trailing"] = hyp.trailing
        extra["trailing_over_eta_sq"] = hyp.trailing / est.eta_sq
    return sol, est, row, extra


def _nse_level(spec, space, data, mesh, level):
    params = nse_parameters(space.kind, mesh, c_inv=spec.c_inv, nu=data.nu)
    cfg = PicardConfig(tol=spec.picard_tol, max_iter=spec.picard_max_iter,
                       relaxation=spec.picard_relaxation)
    sol, history = picard_solve(mesh, space, data, params, cfg, solver_tol=spec.solver_tol)
    est = nse_estimate(sol, data, params, quad_degree=spec.quad_degree)
    norm = spg_nse_norm(sol, data, params, quad_degree=spec.quad_degree)
    row = _nan_row(spec, space.name, data.nu, level, sol.n_dofs)
    _fill(row, est, norm.total)
    extra = {"cells": mesh.n_cells, "norm": norm.constituents, "norm_kind": "spg,nse",
             "picard_iterations": history.iterations, "picard_residual": history.residuals[-1],
             "picard_monotone": history.monotone_after(3)}
    if spec.out:
        stem = _stem(spec, space.name, data.nu, level)
        history.write_csv(os.path.join(spec.out, stem + "_picard.csv"))
    return sol, est, row, extra


def _uniform(spec, pair, nu):
    space = SpacePair.from_name(pair)
    data = PROBLEMS[spec.problem](nu)
    results = []
    for level in range(spec.min_level, spec.levels + 1):
        mesh = build_unit_square(level)
        runner = _nse_level if spec.problem == "nse-smooth" else _oseen_level
        try:
            sol, est, row, extra = runner(spec, space, data, mesh, level)
        except (SolverError, PicardError) as exc:
            logger.warning("%s %s nu=%g level %d failed: %s", spec.problem, pair, nu, level, exc)
            dofs = 2 * DofMap(mesh, space.k).n_dofs + DofMap(mesh, space.l).n_dofs
            results.append(LevelResult(_nan_row(spec, pair, nu, level, dofs),
                                       {"status": f"{type(exc).__name__}: {exc}"}))
            continue
        extra["status"] = "ok"
        if spec.vtk:
            _vtk(spec, sol, est, None, _stem(spec, pair, nu, level))
        results.append(LevelResult(row, extra))
    _orders(results, adaptive=False)
    return results


def _adaptive(spec, pair, nu):
    space = SpacePair.from_name(pair)
    data = PROBLEMS[spec.problem](nu)
    cfg = AdaptiveConfig(strategy=spec.strategy, theta=spec.theta,
                         max_levels=spec.levels + 1,
                         dof_budget=spec.dof_budget, initial_level=spec.min_level)
    try:
        history = adaptive_loop(data, space, cfg, quad_degree=spec.quad_degree,
                                solver_tol=spec.solver_tol)
    except AdaptiveError as exc:
        logger.warning("%s %s nu=%g adaptive run failed: %s", spec.problem, pair, nu, exc)
        return [LevelResult(_nan_row(spec, pair, nu, exc.level), {"status": str(exc)})]
    results = []
    for step in history:
        row = _nan_row(spec, pair, nu, step.level, step.n_dofs)
        _fill(row, step.estimate, step.norm.total)
        v = step.mesh.vertices[step.mesh.cells]
        strip = ((v[..., 0] > 0.9) | (v[..., 1] > 0.9)).any(axis=1)
        extra = {"cells": step.mesh.n_cells, "norm": step.norm.constituents, "norm_kind": "spg",
                 "marked": 0 if step.marked is None else int(step.marked.size),
                 "strip_fraction": float(strip.mean()), "status": "ok"}
        if spec.vtk:
            _vtk(spec, step.solution, step.estimate, step.indicators,
                 _stem(spec, pair, nu, step.level))
        results.append(LevelResult(row, extra))
    _orders(results, adaptive=True)
    return results


def _orders(results, adaptive):
    """log2(e_L / e_{L+1}) for uniform runs, -2 log(e1/e0) / log(N1/N0) otherwise."""
    for prev, cur in zip(results, results[1:]):
        e0, e1 = prev.row["err_spg"], cur.row["err_spg"]
        if not (e0 > 0 and e1 > 0):
            continue
        if adaptive:
            n0, n1 = prev.row["dofs"], cur.row["dofs"]
            cur.row["order"] = -2.0 * math.log(e1 / e0) / math.log(n1 / n0)
        else:
            cur.row["order"] = math.log2(e0 / e1)


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating, np.integer)):
        return repr(value.item())
    return str(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def run_benchmark(spec: BenchmarkSpec):
    """Run every (pair, nu) combination and write ``report.csv`` and ``report.json``.

    Returns the list of LevelResult records in report order.
    """
    if spec.out:
        os.makedirs(spec.out, exist_ok=True)
    results = []
    for pair in spec.pairs:
        for nu in spec.nus:
            run = _adaptive if spec.adaptive else _uniform
            results.extend(run(spec, pair, nu))
    if spec.out:
        write_reports(spec, results)
    return results


def write_reports(spec, results):
    with open(os.path.join(spec.out, "report.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in results:
            writer.writerow([_fmt(r.row[c]) for c in CSV_COLUMNS])
    summary = {
        "spec": asdict(spec),
        "rows": [{**r.row, **r.extra} for r in results],
    }
    with open(os.path.join(spec.out, "report.json"), "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


__all__ = ["BenchmarkSpec", "LevelResult", "run_benchmark", "write_reports", "CSV_COLUMNS", "PAIRS"]
