"""Command-line entry point: ``oseen-spg <problem> [options]``.

Settings come from an optional INI file (section ``[benchmark]``) and are
overridden by explicit command-line flags.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys

from .bench import BenchmarkSpec, run_benchmark
from .mesh import build_unit_square
from .spaces import PAIRS, SpacePair, DofMap

PROBLEM_COMMANDS = ("oseen-smooth", "oseen-layer", "nse-smooth")

# config key -> (parser for the INI string, BenchmarkSpec field)
_CONFIG_KEYS = {
    "pairs": (lambda s: s.replace(",", " ").split(), "pairs"),
    "nus": (lambda s: [float(v) for v in s.replace(",", " ").split()], "nus"),
    "levels": (int, "levels"),
    "min_level": (int, "min_level"),
    "adaptive": (lambda s: s.strip().lower() in ("1", "true", "yes", "on"), "adaptive"),
    "strategy": (str.strip, "strategy"),
    "theta": (float, "theta"),
    "dof_budget": (int, "dof_budget"),
    "out": (str.strip, "out"),
    "vtk": (lambda s: s.strip().lower() in ("1", "true", "yes", "on"), "vtk"),
    "quad_degree": (int, "quad_degree"),
    "c_inv": (float, "c_inv"),
    "solver_tol": (float, "solver_tol"),
    "picard_tol": (float, "picard_tol"),
    "picard_max_iter": (int, "picard_max_iter"),
    "picard_relaxation": (float, "picard_relaxation"),
    "hypotheses": (lambda s: s.strip().lower() in ("1", "true", "yes", "on"), "hypotheses"),
}


def read_config(path):
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(path)
    if "benchmark" not in parser:
        raise ValueError(f"{path}: missing [benchmark] section")
    section = parser["benchmark"]
    settings = {}
    for key, raw in section.items():
        if key == "problem":
            settings["problem"] = raw.strip()
            continue
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}: unknown key {key!r}")
        convert, name = _CONFIG_KEYS[key]
        settings[name] = convert(raw)
    return settings


def _add_run_options(p):
    p.add_argument("--config", help="INI file with a [benchmark] section")
    p.add_argument("--pair", action="append", choices=sorted(PAIRS),
                   help="element pair; repeat for several (default P2/P1)")
    p.add_argument("--nu", type=float, action="append", help="viscosity; repeat for several")
    p.add_argument("--levels", type=int, help="finest uniform level or last adaptive level")
    p.add_argument("--min-level", type=int, help="first level (initial mesh for adaptive runs)")
    p.add_argument("--adaptive", action="store_true", default=None,
                   help="estimator-driven refinement instead of uniform refinement")
    p.add_argument("--strategy", choices=["maximum", "fixed-fraction"])
    p.add_argument("--theta", type=float, help="marking parameter")
    p.add_argument("--dof-budget", type=int)
    p.add_argument("--out", help="output directory (default results)")
    p.add_argument("--vtk", action="store_true", default=None, help="write VTK snapshots")
    p.add_argument("--quad-degree", type=int, help="quadrature degree for norms and estimator")
    p.add_argument("--c-inv", type=float, help="inverse-inequality constant")
    p.add_argument("--solver-tol", type=float, help="relative residual bound of the linear solver")
    p.add_argument("--picard-max-iter", type=int)
    p.add_argument("--picard-relaxation", type=float)
    p.add_argument("--no-hypotheses", dest="hypotheses", action="store_false", default=None,
                   help="skip the interpolation hypothesis diagnostics")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="oseen-spg",
        description="Stabilized Oseen / Navier-Stokes benchmarks with a residual error estimator.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in PROBLEM_COMMANDS:
        _add_run_options(sub.add_parser(name, help=f"run the {name} benchmark"))
    info = sub.add_parser("mesh-info", help="print unit-square mesh statistics")
    info.add_argument("--levels", type=int, default=3)
    info.add_argument("--pair", action="append", choices=sorted(PAIRS))
    return parser


def spec_from_args(args):
    settings = read_config(args.config) if args.config else {}
    config_problem = settings.pop("problem", None)
    if config_problem and config_problem != args.command:
        raise SystemExit(f"config is for {config_problem!r}, not {args.command!r}")
    overrides = {
        "pairs": args.pair, "nus": args.nu, "levels": args.levels, "min_level": args.min_level,
        "adaptive": args.adaptive, "strategy": args.strategy, "theta": args.theta,
        "dof_budget": args.dof_budget, "out": args.out, "vtk": args.vtk,
        "quad_degree": args.quad_degree, "c_inv": args.c_inv, "solver_tol": args.solver_tol,
        "picard_max_iter": args.picard_max_iter, "picard_relaxation": args.picard_relaxation,
        "hypotheses": args.hypotheses,
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return BenchmarkSpec(problem=args.command, **settings)


def mesh_info(levels, pairs):
    pairs = pairs or sorted(PAIRS)
    header = f"{'level':>5} {'vertices':>9} {'cells':>8} {'facets':>8} {'h_max':>10} {'shape':>7}"
    header += "".join(f" {p:>8}" for p in pairs)
    lines = [header]
    for level in range(levels + 1):
        mesh = build_unit_square(level)
        line = (f"{level:>5} {mesh.n_vertices:>9} {mesh.n_cells:>8} {mesh.n_facets:>8} "
                f"{mesh.diameters().max():>10.4e} {mesh.shape_regularity():>7.3f}")
        for p in pairs:
            sp = SpacePair.from_name(p)
            n = 2 * DofMap(mesh, sp.k).n_dofs + DofMap(mesh, sp.l).n_dofs
            line += f" {n:>8}"
        lines.append(line)
    return "\n".join(lines)


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "mesh-info":
        print(mesh_info(args.levels, args.pair))
        return 0
    spec = spec_from_args(args)
    results = run_benchmark(spec)
    cols = ("pair", "nu", "level", "dofs", "err_spg", "eta", "effectivity", "order")
    print(" ".join(f"{c:>11}" for c in cols))
    for r in results:
        print(" ".join(f"{r.row[c]:>11.4g}" if isinstance(r.row[c], float) else f"{r.row[c]:>11}"
                       for c in cols))
    print(f"wrote {spec.out}/report.csv and {spec.out}/report.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
