"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict (printed in the pytest summary) before
asserting.  Expensive sweeps are cached and shared between criteria.
"""
from functools import lru_cache

import numpy as np

from acceptance_log import record
from oseen_spg.adaptivity import AdaptiveConfig, adaptive_loop
from oseen_spg.assembly import (OseenAssembler, ProblemData, StabilizationParams,
                                select_parameters, solve_oseen)
from oseen_spg.bench import BenchmarkSpec, run_benchmark
from oseen_spg.mesh import build_unit_square
from oseen_spg.problems import problem_oseen_layer
from oseen_spg.spaces import PAIRS, SpacePair, interpolate
from polynomials import polynomial_problem
from test_assembly import dense_oracle

ALL_PAIRS = sorted(PAIRS)
SMOOTH_NUS = [1e-3, 1e-4, 1e-5, 1e-6]
LAYER_NUS = [1e-4, 1e-5, 1e-6]
# finest uniform level of the smooth sweeps (level 6 only for the cheap pair)
FINEST = {"P1/P1": 6, "P2/P1": 5, "P2/P2": 5, "P3/P2": 5, "P3/P3": 5}


@lru_cache(maxsize=None)
def smooth_sweep(pair, nu):
    spec = BenchmarkSpec(problem="oseen-smooth", pairs=[pair], nus=[nu], min_level=1,
                         levels=FINEST[pair], out="", hypotheses=(nu == 1e-6))
    return run_benchmark(spec)


def _fmt(x):
    return f"{x:.3g}"


# 1 ---------------------------------------------------------------------------

def test_criterion_01_dense_oracle():
    mesh = build_unit_square(0)

    def b(x):
        return np.column_stack([1 + x[:, 0], 0.5 - x[:, 1]])

    def sigma(x):
        return 1 + x[:, 0]

    def f(x):
        return np.column_stack([1 + x[:, 1], 2 - x[:, 0]])

    worst = {}
    for pair in ("P1/P1", "P2/P1"):
        space = SpacePair.from_name(pair)
        params = StabilizationParams(space.kind, np.array([0.3, 0.2]), np.array([0.5, 0.7]))
        data = ProblemData(nu=0.1, b=b, f=f, sigma=sigma)
        A = OseenAssembler(mesh, space).assemble(data, params).matrix.toarray()
        A_ref, _ = dense_oracle(mesh, space, 0.1, b, sigma, f, params.delta, params.mu)
        worst[pair] = np.max(np.abs(A - A_ref)) / np.max(np.abs(A_ref))
    passed = all(v <= 1e-12 for v in worst.values())
    record(1, passed, "max relative entry difference " +
           ", ".join(f"{p} {v:.1e}" for p, v in worst.items()) + " (bound 1e-12)")
    assert passed


# 2 ---------------------------------------------------------------------------

def test_criterion_02_polynomial_exactness():
    mesh = build_unit_square(2)

    def b(x):
        return np.column_stack([1 + x[:, 0], 0.5 - x[:, 1]])

    errors = {}
    for pair in ALL_PAIRS:
        space = SpacePair.from_name(pair)
        data = polynomial_problem(min(space.k, 2), 1e-3, b, lambda x: 1 + x[:, 0], sigma0=1.0)
        params = select_parameters(space.kind, mesh, data.nu, sigma_inf=2.0)
        sol = solve_oseen(mesh, space, data, params)
        iu = interpolate(sol.velocity_dofmap, data.exact.u).coefficients
        ip = interpolate(sol.pressure_dofmap, data.exact.p).coefficients
        errors[pair] = max(np.max(np.abs(sol.u.coefficients - iu)),
                           np.max(np.abs(sol.p.coefficients - ip)))
    passed = all(v <= 1e-9 for v in errors.values())
    record(2, passed, "max coefficient error " +
           ", ".join(f"{p} {v:.1e}" for p, v in errors.items()) + " (bound 1e-9)")
    assert passed


# 3 ---------------------------------------------------------------------------

def test_criterion_03_convergence_orders():
    lines, passed = [], True
    for pair in ALL_PAIRS:
        space = SpacePair.from_name(pair)
        target = space.k if space.kind == "inf-sup" else space.k + 0.5
        orders = [r.row["order"] for r in smooth_sweep(pair, 1e-5)[-2:]]
        ok = all(abs(o - target) <= 0.3 for o in orders)
        passed &= ok
        lines.append(f"{pair} {'/'.join(_fmt(o) for o in orders)} (target {target})")
    record(3, passed, "nu=1e-5 last two orders: " + "; ".join(lines))
    assert passed


# 4 ---------------------------------------------------------------------------

def test_criterion_04_effectivity_range():
    values, bad = [], []
    for pair in ALL_PAIRS:
        for nu in SMOOTH_NUS:
            for r in smooth_sweep(pair, nu)[-3:]:
                eff = r.row["effectivity"]
                values.append(eff)
                if not 4.0 <= eff <= 11.0:
                    bad.append(f"{pair} nu={nu:g} L{r.row['level']} {_fmt(eff)}")
    median = float(np.median(values))
    passed = not bad and 7.0 <= median <= 11.0
    detail = (f"{len(values)} values in [{_fmt(min(values))}, {_fmt(max(values))}], "
              f"median {_fmt(median)}")
    record(4, passed, detail + (f"; outside [4, 11]: {', '.join(bad)}" if bad else ""))
    assert passed


# 5 ---------------------------------------------------------------------------

def test_criterion_05_robustness_in_nu():
    ratios = {}
    for pair in ALL_PAIRS:
        effs = [smooth_sweep(pair, nu)[-1].row["effectivity"] for nu in SMOOTH_NUS]
        ratios[pair] = max(effs) / min(effs)
    passed = all(v <= 3.0 for v in ratios.values())
    record(5, passed, "max/min effectivity over nu at the finest level: " +
           ", ".join(f"{p} {_fmt(v)}" for p, v in ratios.items()) + " (bound 3)")
    assert passed


# 6 ---------------------------------------------------------------------------

def test_criterion_06_facet_term_is_small():
    worst, where = 0.0, ""
    for pair in ALL_PAIRS:
        for r in smooth_sweep(pair, 1e-5):
            others = min(r.row[c] for c in ("eta_res", "eta_div", "eta_delta", "eta_mu"))
            ratio = r.row["eta_F"] / others
            if ratio > worst:
                worst, where = ratio, f"{pair} L{r.row['level']}"
    passed = worst <= 0.1
    record(6, passed, f"max eta_F / min(other components) = {worst:.2e} at {where} (bound 0.1)")
    assert passed


# 7 ---------------------------------------------------------------------------

def test_criterion_07_hypotheses():
    failures, trailing = [], 0.0
    for pair in ALL_PAIRS:
        for r in smooth_sweep(pair, 1e-6):
            if r.row["level"] < 2:
                continue
            for name, h in r.extra["hypotheses"].items():
                if not h["holds"]:
                    failures.append(f"{pair} L{r.row['level']} {name} "
                                    f"{h['lhs']:.3g}>{h['rhs']:.3g}")
            trailing = max(trailing, r.extra["trailing_over_eta_sq"])
    passed = not failures and trailing <= 1e-3
    detail = f"max trailing/eta^2 = {trailing:.1e} (bound 1e-3); "
    if failures:
        detail += f"{len(failures)} violated checks: " + "; ".join(failures)
    else:
        detail += "all hypotheses hold on levels >= 2"
    record(7, passed, detail)
    assert passed


# 8 ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def layer_level(pair, nu, level):
    spec = BenchmarkSpec(problem="oseen-layer", pairs=[pair], nus=[nu], min_level=level,
                         levels=level, out="")
    return run_benchmark(spec)[0].row


def strip_fraction(mesh):
    v = mesh.vertices[mesh.cells]
    return float(((v[..., 0] > 0.9) | (v[..., 1] > 0.9)).any(axis=1).mean())


def test_criterion_08_layer_benchmark():
    problems, passed = [], True
    for level in (3, 5):
        for pair in ALL_PAIRS:
            rows = [layer_level(pair, nu, level) for nu in LAYER_NUS]
            for key in ("err_spg", "eta"):
                seq = [r[key] for r in rows]
                if not all(b > a for a, b in zip(seq, seq[1:])):
                    passed = False
                    problems.append(f"{pair} L{level} {key} not increasing")
    fractions = {}
    for pair in ALL_PAIRS:
        hist = adaptive_loop(problem_oseen_layer(1e-6), SpacePair.from_name(pair),
                             AdaptiveConfig(strategy="maximum", theta=0.5, max_levels=9,
                                            initial_level=2))
        fr = [strip_fraction(step.mesh) for step in hist]
        fractions[pair] = fr
        if len(fr) < 9 or not all(b > a for a, b in zip(fr, fr[1:])) or fr[-1] <= 0.5:
            passed = False
            problems.append(f"{pair} strip fractions {[round(x, 3) for x in fr]}")
    detail = ("err and eta increase as nu decreases at L3 and L5 for all pairs; "
              if not any("increasing" in p for p in problems) else "")
    detail += "strip fraction after 8 adaptive steps: " + ", ".join(
        f"{p} {_fmt(fr[0])}->{_fmt(fr[-1])}" for p, fr in fractions.items())
    if problems:
        detail += "; problems: " + "; ".join(problems)
    record(8, passed, detail)
    assert passed


# 9 ---------------------------------------------------------------------------

# Picard does not converge on the coarsest meshes at nu = 1/400 for several
# pairs, so that viscosity is checked on the finest affordable levels.  The
# P3/P2 level-5 systems sit at a double-precision residual floor of about
# 5e-12 relative, so the linear solves use 1e-11; the Picard test stays 1e-10.
NSE_LEVELS = {
    0.01: {"P1/P1": (4, 4), "P2/P1": (3, 5), "P2/P2": (4, 4), "P3/P2": (3, 5), "P3/P3": (4, 4)},
    0.0025: {"P1/P1": (5, 5), "P2/P1": (4, 5), "P2/P2": (5, 5), "P3/P2": (4, 5), "P3/P3": (5, 5)},
}


@lru_cache(maxsize=None)
def nse_run(pair, nu):
    lo, hi = NSE_LEVELS[nu][pair]
    spec = BenchmarkSpec(problem="nse-smooth", pairs=[pair], nus=[nu], min_level=lo, levels=hi,
                         picard_max_iter=500, solver_tol=1e-11, out="")
    return run_benchmark(spec)


def test_criterion_09_navier_stokes():
    lines, passed = [], True
    for nu in (0.01, 0.0025):
        for pair in ALL_PAIRS:
            rows = nse_run(pair, nu)
            space = SpacePair.from_name(pair)
            notes = []
            for r in rows:
                if r.extra.get("status") != "ok":
                    passed = False
                    notes.append(f"L{r.row['level']} {r.extra.get('status')}")
            last = rows[-1]
            if last.extra.get("status") == "ok":
                eff = last.row["effectivity"]
                ok = 4.0 <= eff <= 11.0
                passed &= ok
                notes.append(f"L{last.row['level']} it={last.extra['picard_iterations']} "
                             f"eff={_fmt(eff)}{'' if ok else ' (out of [4,11])'}")
                if space.kind == "inf-sup" and len(rows) > 1:
                    order = last.row["order"]
                    ok = abs(order - space.k) <= 0.3
                    passed &= ok
                    notes.append(f"order={_fmt(order)}{'' if ok else ' (off target)'}")
            lines.append(f"nu={nu:g} {pair}: " + " ".join(notes))
    record(9, passed, "; ".join(lines))
    assert passed


# 10 --------------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path):
    specs = [
        dict(problem="oseen-smooth", pairs=["P1/P1", "P3/P2"], nus=[1e-5], levels=3),
        dict(problem="oseen-layer", pairs=["P2/P1"], nus=[1e-6], levels=4, min_level=2,
             adaptive=True),
        dict(problem="nse-smooth", pairs=["P2/P1"], nus=[0.01], levels=2, min_level=2,
             picard_max_iter=500),
    ]
    same = []
    for i, kw in enumerate(specs):
        reports = []
        for run in ("a", "b"):
            out = tmp_path / f"{i}{run}"
            run_benchmark(BenchmarkSpec(out=str(out), **kw))
            reports.append((out / "report.csv").read_bytes())
        same.append(reports[0] == reports[1])
    passed = all(same)
    record(10, passed, f"{sum(same)}/{len(same)} configs give bit-identical report.csv on rerun")
    assert passed
