"""Adaptive solve / estimate / mark / refine loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assembly import DiscreteSolution, select_parameters, solve_oseen, sup_norm
from .estimator import ErrorEstimate, NormReport, estimate, spg_error_norm
from .mesh import Mesh, bisect_marked, build_unit_square
from .solver import SolverError
from .spaces import DofMap

logger = logging.getLogger(__name__)

STRATEGIES = ("maximum", "fixed-fraction")


class AdaptiveError(RuntimeError):
    """A solve failed inside the adaptive loop; ``level`` says where."""

    def __init__(self, message, level):
        super().__init__(message)
        self.level = level


@dataclass
class AdaptiveConfig:
    """Marking rule and stopping caps.

    ``theta = 0`` with the maximum strategy marks every cell.
    """

    strategy: str = "maximum"
    theta: float = 0.5
    max_levels: int = 10
    dof_budget: int = 300_000
    initial_level: int = 2

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.dof_budget <= 0:
            raise ValueError("DoF budget must be positive")
        if self.max_levels < 1:
            raise ValueError("max_levels must be at least 1")


def local_indicator(est: ErrorEstimate, mesh: Mesh):
    """Cellwise indicators whose squares sum to eta^2.

    Each cell gets its own residual, SUPG and grad-div terms, its share of the
    global divergence term, half of every interior facet term and all of a
    boundary facet term.
    """
    sq = est.res_sq + est.delta_sq + est.mu_sq + est.div_share
    fc = mesh.facet_cells
    interior = fc[:, 1] >= 0
    weight = np.where(interior, 0.5, 1.0) * est.facet_sq
    sq = sq + np.bincount(fc[:, 0], weights=weight, minlength=mesh.n_cells)
    sq = sq + np.bincount(fc[interior, 1], weights=weight[interior], minlength=mesh.n_cells)
    return np.sqrt(sq)


def mark(indicators, config: AdaptiveConfig):
    """Indices of the cells to refine, sorted ascending.

    ``maximum``: cells with indicator >= theta * max.  ``fixed-fraction``: the
    smallest set of largest indicators carrying at least a theta fraction of
    the sum of squares.  At least one cell is marked when any indicator is
    positive.
    """
    eta = np.asarray(indicators, dtype=float)
    if eta.size == 0:
        raise ValueError("no indicators to mark")
    top = eta.max()
    if not top > 0.0:
        return np.arange(eta.size) if config.theta == 0.0 else np.empty(0, dtype=np.int64)
    if config.strategy == "maximum":
        return np.flatnonzero(eta >= config.theta * top)
    order = np.argsort(-eta, kind="stable")
    cum = np.cumsum(eta[order] ** 2)
    n = int(np.searchsorted(cum, config.theta * cum[-1] * (1 - 1e-14), side="left")) + 1
    return np.sort(order[:min(n, eta.size)])


@dataclass
class AdaptiveStep:
    level: int
    mesh: Mesh
    solution: DiscreteSolution
    estimate: ErrorEstimate
    indicators: np.ndarray
    norm: Optional[NormReport]
    marked: Optional[np.ndarray] = None

    @property
    def n_dofs(self):
        return self.solution.n_dofs


def _n_dofs(mesh, space):
    return 2 * DofMap(mesh, space.k).n_dofs + DofMap(mesh, space.l).n_dofs


def adaptive_loop(data, space, config=None, mesh=None, quad_degree=None, solver_tol=1e-12,
                  on_step=None):
    """Run the adaptive cycle and return the list of AdaptiveStep records.

    The first mesh is always solved.  Later meshes are solved only while they
    stay within the DoF budget and the level cap.
    """
    config = config or AdaptiveConfig()
    mesh = mesh if mesh is not None else build_unit_square(config.initial_level)
    sigma_inf = sup_norm(data.sigma, mesh)
    history = []
    for level in range(config.max_levels):
        if level > 0 and _n_dofs(mesh, space) > config.dof_budget:
            break
        params = select_parameters(space.kind, mesh, data.nu, sigma_inf=sigma_inf)
        try:
            sol = solve_oseen(mesh, space, data, params, quad_degree=quad_degree, tol=solver_tol)
        except SolverError as exc:
            raise AdaptiveError(f"adaptive level {level}: {exc}", level) from exc
        est = estimate(sol, data, params, quad_degree=quad_degree)
        norm = spg_error_norm(sol, data, params, quad_degree=quad_degree) if data.exact else None
        step = AdaptiveStep(level, mesh, sol, est, local_indicator(est, mesh), norm)
        history.append(step)
        logger.info("adaptive level %d: %d cells, %d dofs, eta %.3e",
                    level, mesh.n_cells, sol.n_dofs, est.eta)
        if on_step is not None:
            on_step(step)
        if level + 1 >= config.max_levels or sol.n_dofs >= config.dof_budget:
            break
        step.marked = mark(step.indicators, config)
        if step.marked.size == 0:
            break
        mesh = bisect_marked(mesh, step.marked)
    return history
