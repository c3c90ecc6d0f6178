"""SUPG/PSPG/grad-div stabilized assembly of the Oseen problem.

Unknowns are ordered ``[u1, u2, p]`` followed, when the whole boundary is of
Dirichlet type, by one Lagrange multiplier enforcing a zero pressure mean.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.io
import scipy.sparse as sp

from .elements import VERTICES
from .mesh import LOCAL_EDGES, NEUMANN
from .quadrature import make_quadrature
from .solver import solve
from .spaces import EQUAL_ORDER, INF_SUP, DofMap, FEFunction, PointSet, SpacePair

logger = logging.getLogger(__name__)


@dataclass
class ExactSolution:
    """Analytic velocity/pressure with the derivatives the diagnostics need.

    All callables take an ``(n, 2)`` array of points.  ``grad_u`` returns
    ``(n, 2, 2)`` with ``grad_u[:, c, j] = d u_c / d x_j``.
    """

    u: Callable
    grad_u: Callable
    lap_u: Callable
    p: Callable
    grad_p: Callable


@dataclass
class ProblemData:
    nu: float
    b: Callable
    f: Callable
    sigma: Callable | float = 0.0
    sigma0: float = 0.0
    g: Optional[Callable] = None
    dirichlet: Optional[Callable] = None
    exact: Optional[ExactSolution] = None

    def __post_init__(self):
        if not self.nu > 0.0:
            raise ValueError("viscosity must be positive")
        if self.sigma0 < 0.0:
            raise ValueError("sigma0 must be non-negative")


def field_at(coef, ps, ncomp=None):
    """Evaluate a callable, constant or FEFunction coefficient on a PointSet."""
    if isinstance(coef, FEFunction):
        vals = coef.values(ps)
    elif callable(coef):
        vals = np.asarray(coef(ps.x), dtype=float)
    else:
        n = len(ps.cells)
        vals = np.full((n,) if ncomp is None else (n, ncomp), float(coef))
    if ncomp is None and vals.ndim == 0:
        vals = np.full(len(ps.cells), float(vals))
    return vals


def sup_norm(coef, mesh, degree=6):
    """Max of ``|coef|`` over quadrature points (cellwise smooth coefficients)."""
    ps = PointSet.quadrature(mesh, make_quadrature(degree).points)
    vals = field_at(coef, ps)
    if vals.ndim == 2:
        vals = np.linalg.norm(vals, axis=1)
    return float(np.max(np.abs(vals)))


@dataclass
class StabilizationParams:
    rule: str
    delta: np.ndarray
    mu: np.ndarray
    c_delta: float = 0.5
    c_mu: float = 0.5
    c_inv: float = 1.0
    admissible: np.ndarray = field(default=None)

    @property
    def n_cells(self):
        return len(self.delta)

    @property
    def all_admissible(self):
        return bool(np.all(self.admissible))

    def scaled(self, s):
        return StabilizationParams(self.rule, self.delta * s, self.mu * s, self.c_delta,
                                   self.c_mu, self.c_inv, self.admissible)


def admissibility(delta, h, nu, c_inv, sigma_inf):
    """Flag cells with delta_K <= min(h_K^2 / (8 c_inv nu), 1 / (2 |sigma|_inf))."""
    bound = h ** 2 / (8.0 * c_inv * nu)
    if sigma_inf > 0.0:
        bound = np.minimum(bound, 1.0 / (2.0 * sigma_inf))
    return delta <= bound


def select_parameters(rule, mesh, nu, c_delta=0.5, c_mu=0.5, c_inv=1.0, sigma_inf=0.0):
    """Cellwise SUPG and grad-div parameters.

    ``inf-sup``: delta = c_delta h^2, mu = c_mu.
    ``equal-order``: delta = c_delta h if nu < h else c_delta h^2, mu = c_mu h.
    """
    if not nu > 0.0:
        raise ValueError("viscosity must be positive")
    h = mesh.diameters()
    if rule == INF_SUP:
        delta = c_delta * h ** 2
        mu = np.full_like(h, c_mu)
    elif rule == EQUAL_ORDER:
        delta = np.where(nu < h, c_delta * h, c_delta * h ** 2)
        mu = c_mu * h
    else:
        raise ValueError(f"unknown stabilization rule {rule!r}")
    adm = admissibility(delta, h, nu, c_inv, sigma_inf)
    if not adm.all():
        logger.info("delta_K violates the admissibility bound on %d of %d cells",
                    int((~adm).sum()), len(h))
    return StabilizationParams(rule, delta, mu, c_delta, c_mu, c_inv, adm)


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_velocity: int
    n_pressure: int
    has_multiplier: bool
    dirichlet_dofs: np.ndarray = None

    @property
    def size(self):
        return self.matrix.shape[0]

    def dump(self, stem):
        """Write ``stem.mtx`` (matrix) and ``stem_rhs.mtx`` (RHS) in MatrixMarket format."""
        scipy.io.mmwrite(f"{stem}.mtx", self.matrix)
        scipy.io.mmwrite(f"{stem}_rhs.mtx", self.rhs[:, None])


@dataclass
class DiscreteSolution:
    mesh: object
    space: SpacePair
    u: FEFunction
    p: FEFunction
    params: StabilizationParams
    multiplier: float = 0.0

    @property
    def velocity_dofmap(self):
        return self.u.dofmap

    @property
    def pressure_dofmap(self):
        return self.p.dofmap

    @property
    def n_dofs(self):
        """Velocity DoFs (Dirichlet nodes included) plus pressure DoFs."""
        return 2 * self.u.dofmap.n_dofs + self.p.dofmap.n_dofs

    def vector(self):
        x = np.concatenate([self.u.coefficients.ravel(), self.p.coefficients])
        return x

    @classmethod
    def from_vector(cls, mesh, space, dofmap_u, dofmap_p, params, x):
        nu_, np_ = dofmap_u.n_dofs, dofmap_p.n_dofs
        u = FEFunction(dofmap_u, x[:2 * nu_].reshape(2, nu_).copy())
        p = FEFunction(dofmap_p, x[2 * nu_:2 * nu_ + np_].copy())
        lam = float(x[2 * nu_ + np_]) if len(x) > 2 * nu_ + np_ else 0.0
        return cls(mesh, space, u, p, params, lam)


def _bmm(a, b, w):
    """Batched ``sum_q w[c,q] a[c,q,i] b[c,q,j]`` -> ``(nc, ni, nj)``."""
    return np.matmul((a * w[..., None]).transpose(0, 2, 1), b)


class OseenAssembler:
    """Cell-vectorized assembly of the stabilized Oseen system on one mesh.

    The geometric and reference tables are computed once per mesh, so repeated
    assembly (Picard iterations, parameter sweeps) only re-evaluates the
    coefficients.
    """

    def __init__(self, mesh, space: SpacePair, quad_degree=None):
        self.mesh = mesh
        self.space = space
        self.dofmap_u = DofMap(mesh, space.k)
        self.dofmap_p = DofMap(mesh, space.l)
        self.quad_degree = quad_degree or min(2 * space.k + 2, 12)
        self.rule = make_quadrature(self.quad_degree)
        self.points = PointSet.quadrature(mesh, self.rule.points)

        eu, ep = self.dofmap_u.element, self.dofmap_p.element
        qp = self.rule.points
        origin, J = mesh.jacobians()
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(det <= 0):
            raise ValueError("mesh contains degenerate or clockwise cells")
        Jinv = np.linalg.inv(J)
        self.weights = det[:, None] * self.rule.weights[None, :]

        self.phi_u = np.broadcast_to(eu.values(qp), (mesh.n_cells,) + (len(qp), eu.n_basis))
        self.grad_u = np.einsum("qbk,ckj->cqbj", eu.gradients(qp), Jinv)
        M = np.einsum("cki,cli->ckl", Jinv, Jinv)
        self.lap_u = np.einsum("qbkl,ckl->cqb", eu.hessians(qp), M)
        self.phi_p = np.broadcast_to(ep.values(qp), (mesh.n_cells,) + (len(qp), ep.n_basis))
        self.grad_p = np.einsum("qbk,ckj->cqbj", ep.gradients(qp), Jinv)

        nvu = self.dofmap_u.n_dofs
        du = self.dofmap_u.cell_dofs
        dp = self.dofmap_p.cell_dofs
        self.local_dofs = np.concatenate([du, nvu + du, 2 * nvu + dp], axis=1)
        self.n_velocity = nvu
        self.n_pressure = self.dofmap_p.n_dofs
        self.has_multiplier = not np.any(mesh.facet_marker[mesh.boundary_facets] == NEUMANN)

    @property
    def n_unknowns(self):
        return 2 * self.n_velocity + self.n_pressure + int(self.has_multiplier)

    def coefficients(self, data: ProblemData, b=None):
        nc, nq = self.points.shape
        bq = field_at(data.b if b is None else b, self.points, 2).reshape(nc, nq, 2)
        sq = field_at(data.sigma, self.points).reshape(nc, nq)
        fq = field_at(data.f, self.points, 2).reshape(nc, nq, 2)
        return bq, sq, fq

    def element_matrices(self, data, params, b=None):
        if params.n_cells != self.mesh.n_cells:
            raise ValueError(f"stabilization parameters for {params.n_cells} cells "
                             f"used on a mesh with {self.mesh.n_cells} cells")
        nu = data.nu
        bq, sq, fq = self.coefficients(data, b)
        w = self.weights
        delta = params.delta[:, None]
        mu = params.mu[:, None]
        phi, G, lap = self.phi_u, self.grad_u, self.lap_u
        psi, Gp = self.phi_p, self.grad_p

        conv = np.einsum("cqk,cqbk->cqb", bq, G)
        strong = -nu * lap + conv + sq[..., None] * phi

        nb = phi.shape[2]
        visc = nu * (_bmm(G[..., 0], G[..., 0], w) + _bmm(G[..., 1], G[..., 1], w))
        same = visc + _bmm(phi, conv + sq[..., None] * phi, w) + _bmm(conv, strong, delta * w)

        A_uu = [[None, None], [None, None]]
        for c in range(2):
            for d in range(2):
                gd = _bmm(G[..., c], G[..., d], mu * w)
                A_uu[c][d] = gd + same if c == d else gd
        A_up = [-_bmm(G[..., c], psi, w) + _bmm(conv, Gp[..., c], delta * w) for c in range(2)]
        A_pu = [_bmm(psi, G[..., c], w) + _bmm(Gp[..., c], strong, delta * w) for c in range(2)]
        A_pp = _bmm(Gp[..., 0], Gp[..., 0], delta * w) + _bmm(Gp[..., 1], Gp[..., 1], delta * w)

        top = np.concatenate([A_uu[0][0], A_uu[0][1], A_up[0]], axis=2)
        mid = np.concatenate([A_uu[1][0], A_uu[1][1], A_up[1]], axis=2)
        bot = np.concatenate([A_pu[0], A_pu[1], A_pp], axis=2)
        Ke = np.concatenate([top, mid, bot], axis=1)

        fw = fq * w[..., None]
        Fu = [np.einsum("cq,cqb->cb", fw[..., c], phi + delta[..., None] * conv)
              for c in range(2)]
        Fp = np.einsum("cqk,cqbk->cb", fw * delta[..., None], Gp)
        Fe = np.concatenate([Fu[0], Fu[1], Fp], axis=1)
        assert Ke.shape[1] == 2 * nb + psi.shape[2]
        return Ke, Fe

    def neumann_rhs(self, data):
        mesh = self.mesh
        F = np.zeros(2 * self.n_velocity)
        nf = mesh.boundary_facets[mesh.facet_marker[mesh.boundary_facets] == NEUMANN]
        if len(nf) == 0 or data.g is None:
            return F
        rule = self.rule
        cells = mesh.facet_cells[nf, 0]
        local = np.argmax(mesh.cell_facets[cells] == nf[:, None], axis=1)
        ends = LOCAL_EDGES[local]
        t = rule.edge_points
        ref = (VERTICES[ends[:, 0]][:, None, :] * (1 - t)[None, :, None]
               + VERTICES[ends[:, 1]][:, None, :] * t[None, :, None])
        nq = len(t)
        ps = PointSet.from_reference(mesh, np.repeat(cells, nq), ref.reshape(-1, 2))
        g = np.asarray(data.g(ps.x)).reshape(len(nf), nq, 2)
        phi = self.dofmap_u.element.values(ps.ref).reshape(len(nf), nq, -1)
        lw = mesh.facet_lengths()[nf][:, None] * rule.edge_weights[None, :]
        dofs = self.dofmap_u.cell_dofs[cells]
        for c in range(2):
            loc = np.einsum("fq,fqb->fb", g[..., c] * lw, phi)
            np.add.at(F, c * self.n_velocity + dofs, loc)
        return F

    def assemble(self, data: ProblemData, params: StabilizationParams, b=None) -> LinearSystem:
        """Assemble matrix and right-hand side before Dirichlet conditions.

        ``b`` overrides ``data.b``; the Picard iteration passes the current
        velocity iterate here.
        """
        Ke, Fe = self.element_matrices(data, params, b)
        n = 2 * self.n_velocity + self.n_pressure
        ld = self.local_dofs
        nl = ld.shape[1]
        rows = np.repeat(ld, nl, axis=1).ravel()
        cols = np.tile(ld, (1, nl)).ravel()
        A = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        F = np.bincount(ld.ravel(), weights=Fe.ravel(), minlength=n)
        F[:2 * self.n_velocity] += self.neumann_rhs(data)
        return LinearSystem(A, F, self.n_velocity, self.n_pressure, False)

    def pressure_mean_vector(self):
        w = self.weights
        loc = np.einsum("cq,cqb->cb", w, self.phi_p)
        return np.bincount(self.dofmap_p.cell_dofs.ravel(), weights=loc.ravel(),
                           minlength=self.n_pressure)

    def dirichlet_values(self, data):
        dm = self.dofmap_u
        D = dm.dirichlet_dofs
        if data.dirichlet is None:
            vals = np.zeros((len(D), 2))
        else:
            vals = np.asarray(data.dirichlet(dm.coordinates[D]), dtype=float)
        dofs = np.concatenate([D, self.n_velocity + D])
        return dofs, np.concatenate([vals[:, 0], vals[:, 1]])

    def apply_dirichlet(self, system: LinearSystem, data: ProblemData) -> LinearSystem:
        """Identity rows for Dirichlet DoFs with known columns moved to the RHS.

        When no Neumann boundary exists a zero-mean pressure multiplier row and
        column are appended.
        """
        A = system.matrix
        n = A.shape[0]
        dofs, vals = self.dirichlet_values(data)
        x = np.zeros(n)
        x[dofs] = vals
        rhs = system.rhs - A @ x
        free = np.ones(n)
        free[dofs] = 0.0
        P = sp.diags(free)
        A = (P @ A @ P + sp.diags(1.0 - free)).tocsr()
        rhs[dofs] = vals
        if self.has_multiplier:
            m = np.zeros(n)
            m[2 * self.n_velocity:] = self.pressure_mean_vector()
            col = sp.csr_matrix(m[:, None])
            A = sp.bmat([[A, col], [col.T, None]], format="csr")
            rhs = np.concatenate([rhs, [0.0]])
        A.sort_indices()
        return LinearSystem(A, rhs, system.n_velocity, system.n_pressure,
                            self.has_multiplier, dofs)

    def system(self, data, params, b=None):
        return self.apply_dirichlet(self.assemble(data, params, b), data)

    def solution(self, params, x):
        return DiscreteSolution.from_vector(self.mesh, self.space, self.dofmap_u,
                                            self.dofmap_p, params, x)


def assemble(mesh, space, data, params, quad_degree=None):
    return OseenAssembler(mesh, space, quad_degree).assemble(data, params)


def apply_dirichlet(system, data, assembler):
    return assembler.apply_dirichlet(system, data)


def solve_oseen(mesh, space, data, params, quad_degree=None, assembler=None, **solver_kw):
    """Assemble, constrain and solve; returns a DiscreteSolution."""
    asm = assembler or OseenAssembler(mesh, space, quad_degree)
    system = asm.system(data, params)
    report = solve(system, **solver_kw)
    return asm.solution(params, report.x)
