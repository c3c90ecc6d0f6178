"""SUPG/PSPG/grad-div stabilized finite elements for the Oseen and steady
Navier-Stokes equations with a residual-based a posteriori error estimator."""

from .adaptivity import AdaptiveConfig, adaptive_loop, local_indicator, mark
from .assembly import (DiscreteSolution, ExactSolution, OseenAssembler, ProblemData,
                       StabilizationParams, select_parameters, solve_oseen)
from .estimator import (ErrorEstimate, effectivity, estimate, hypothesis_diagnostics,
                        spg_error_norm, spg_nse_norm)
from .mesh import Mesh, bisect_marked, build_unit_square, red_refine
from .navier_stokes import PicardConfig, nse_estimate, nse_parameters, picard_solve
from .problems import problem_nse_smooth, problem_oseen_layer, problem_oseen_smooth
from .solver import SolverError, solve
from .spaces import PAIRS, DofMap, FEFunction, SpacePair, interpolate

__version__ = "0.1.0"
