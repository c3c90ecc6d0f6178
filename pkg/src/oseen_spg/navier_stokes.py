"""Steady Navier-Stokes equations by Picard iteration on the stabilized Oseen form."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import OseenAssembler, StabilizationParams, admissibility
from .estimator import estimate, spg_nse_norm
from .solver import solve
from .spaces import EQUAL_ORDER, INF_SUP

logger = logging.getLogger(__name__)

INITIAL_GUESSES = ("stokes", "zero")


@dataclass
class PicardConfig:
    """Stopping rule and start of the fixed-point iteration.

    ``tol`` bounds the Euclidean norm of the nonlinear algebraic residual.
    ``relaxation`` in (0, 1] damps the update.
    """

    tol: float = 1e-10
    max_iter: int = 100
    initial: str = "stokes"
    relaxation: float = 1.0

    def __post_init__(self):
        if not self.tol > 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.initial not in INITIAL_GUESSES:
            raise ValueError(f"initial guess must be one of {INITIAL_GUESSES}")
        if not 0.0 < self.relaxation <= 1.0:
            raise ValueError("relaxation must lie in (0, 1]")


@dataclass
class PicardHistory:
    residuals: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        """Number of linear solves after the initial guess."""
        return max(len(self.residuals) - 1, 0)

    def monotone_after(self, skip=3):
        r = np.asarray(self.residuals[skip:])
        return bool(np.all(np.diff(r) < 0)) if len(r) > 1 else True

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "residual"])
            for i, r in enumerate(self.residuals):
                writer.writerow([i, repr(float(r))])


class PicardError(RuntimeError):
    """The iteration missed the tolerance; ``history`` holds the residuals."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def nse_parameters(kind, mesh, c_delta=0.5, c_mu=0.5, c_inv=1.0, nu=None):
    """delta_K = c_delta h_K^2 for every pair; mu_K = c_mu (inf-sup) or c_mu h_K."""
    h = mesh.diameters()
    delta = c_delta * h ** 2
    if kind == INF_SUP:
        mu = np.full_like(h, c_mu)
    elif kind == EQUAL_ORDER:
        mu = c_mu * h
    else:
        raise ValueError(f"unknown stabilization rule {kind!r}")
    adm = admissibility(delta, h, nu, c_inv, 0.0) if nu else np.ones(len(h), bool)
    return StabilizationParams(kind, delta, mu, c_delta, c_mu, c_inv, adm)


def _residual(asm, data, params, x):
    system = asm.system(data, params, b=asm.solution(params, x).u)
    return system, float(np.linalg.norm(system.matrix @ x - system.rhs))


def picard_solve(mesh, space, data, params, config=None, assembler=None, frozen_b=None,
                 solver_tol=1e-12):
    """Fixed-point iteration u_h^{n+1} = Oseen(b = u_h^n, sigma = 0).

    The convection in the Galerkin and in the SUPG terms is the current
    iterate.  With ``frozen_b`` a single Oseen solve with that field is done.

    Returns
    -------
    (DiscreteSolution, PicardHistory)
    """
    config = config or PicardConfig()
    asm = assembler or OseenAssembler(mesh, space)
    data = replace(data, sigma=0.0, sigma0=0.0)
    history = PicardHistory()

    if frozen_b is not None:
        system = asm.system(data, params, b=frozen_b)
        x = solve(system, tol=solver_tol).x
        history.residuals.append(float(np.linalg.norm(system.matrix @ x - system.rhs)))
        history.converged = True
        return asm.solution(params, x), history

    perm = None
    if config.initial == "stokes":
        report = solve(asm.system(data, params, b=0.0), tol=solver_tol)
        x, perm = report.x, report.perm
    else:
        x = np.zeros(asm.n_unknowns)

    for _ in range(config.max_iter):
        system, res = _residual(asm, data, params, x)
        history.residuals.append(res)
        logger.debug("picard iteration %d residual %.3e", len(history.residuals) - 1, res)
        if res < config.tol:
            history.converged = True
            break
        if not np.isfinite(res):
            break
        report = solve(system, tol=solver_tol, perm=perm)
        x_new, perm = report.x, report.perm
        x = x + config.relaxation * (x_new - x)
    else:
        system, res = _residual(asm, data, params, x)
        history.residuals.append(res)
        history.converged = res < config.tol

    if not history.converged:
        raise PicardError(f"Picard iteration stalled at residual {history.residuals[-1]:.3e} "
                          f"after {history.iterations} steps", history)
    if not history.monotone_after(3):
        logger.warning("Picard residuals are not monotone after the third iteration")
    return asm.solution(params, x), history


def nse_estimate(solution, data, params=None, space=None, quad_degree=None):
    """Oseen estimator with b = u_h in the cell residual and facet weights, sigma0 = 0."""
    data = replace(data, sigma=0.0, sigma0=0.0)
    return estimate(solution, data, params, space, b=solution.u, quad_degree=quad_degree,
                    facet_convection=solution.u)


__all__ = ["PicardConfig", "PicardHistory", "PicardError", "nse_parameters", "picard_solve",
           "nse_estimate", "spg_nse_norm"]
