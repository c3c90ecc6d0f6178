"""Residual-based a posteriori estimator and error norms for the stabilized method.

All min-brackets use unit constants.  Entries that degenerate (``1/sigma0``
with ``sigma0 = 0``, ``40/|b|^2`` with ``b = 0`` on a facet) are left out of
the minimum.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import field_at
from .mesh import NEUMANN
from .quadrature import make_quadrature
from .spaces import EQUAL_ORDER, FEFunction, PointSet, interpolate

DIM = 2


def _degree(solution, quad_degree):
    return quad_degree or min(2 * solution.space.k + 4, 12)


def _cell_rule(solution, quad_degree=None):
    rule = make_quadrature(_degree(solution, quad_degree))
    mesh = solution.mesh
    ps = PointSet.quadrature(mesh, rule.points)
    w = 2.0 * mesh.areas()[:, None] * rule.weights[None, :]
    return ps, w


def cell_residual(solution, data, ps, b=None):
    """r_K = f + nu Lap u_h - (b . grad) u_h - sigma u_h - grad p_h at the points.

    ``b`` overrides ``data.b``; the Navier-Stokes estimator passes ``u_h``.
    """
    bq = field_at(data.b if b is None else b, ps, 2)
    sq = field_at(data.sigma, ps)
    fq = field_at(data.f, ps, 2)
    gu = solution.u.gradients(ps)
    conv = np.einsum("ncj,nj->nc", gu, bq)
    return (fq + data.nu * solution.u.laplacians(ps) - conv
            - sq[:, None] * solution.u.values(ps) - solution.p.gradients(ps))


def _flux(solution, nu, ps, normals):
    """(-nu grad u_h + p_h I) n at facet points; ``normals`` per point."""
    gu = solution.u.gradients(ps)
    return -nu * np.einsum("ncj,nj->nc", gu, normals) + solution.p.values(ps)[:, None] * normals


def facet_residual(solution, data, facets, t):
    """r_F at parameters ``t`` along each facet, shape ``(len(facets), len(t), 2)``.

    Interior facets: jump of (-nu grad u_h + p_h I) n_F, with n_F outward from
    the cell of smaller index.  Neumann facets: g - (nu grad u_h - p_h I) n.
    Dirichlet facets: zero.
    """
    mesh = solution.mesh
    facets = np.asarray(facets)
    nt = len(t)
    out = np.zeros((len(facets), nt, 2))
    n = np.repeat(mesh.facet_normals()[facets], nt, axis=0)
    interior = mesh.facet_cells[facets, 1] >= 0
    if interior.any():
        fi = facets[interior]
        mi = np.repeat(interior, nt)
        p0 = PointSet.on_facets(mesh, fi, t, side=0)
        p1 = PointSet.on_facets(mesh, fi, t, side=1)
        jump = _flux(solution, data.nu, p0, n[mi]) - _flux(solution, data.nu, p1, n[mi])
        out[interior] = jump.reshape(len(fi), nt, 2)
    neumann = ~interior & (mesh.facet_marker[facets] == NEUMANN)
    if neumann.any():
        fn = facets[neumann]
        mn = np.repeat(neumann, nt)
        ps = PointSet.on_facets(mesh, fn, t, side=0)
        g = np.zeros((len(ps.cells), 2)) if data.g is None else np.asarray(data.g(ps.x))
        val = g + _flux(solution, data.nu, ps, n[mn])
        out[neumann] = val.reshape(len(fn), nt, 2)
    return out


@dataclass
class ErrorEstimate:
    """Squared estimator contributions.

    ``div_sq`` is the global grad-div-of-u_h term; ``div_share`` distributes it
    over cells proportionally to the cellwise divergence norm.
    """

    res_sq: np.ndarray
    delta_sq: np.ndarray
    mu_sq: np.ndarray
    facet_sq: np.ndarray
    div_sq: float
    div_share: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def components(self):
        """Global aggregates (sum of squares)^(1/2) of the five parts."""
        return {
            "res": float(np.sqrt(self.res_sq.sum())),
            "div": float(np.sqrt(self.div_sq)),
            "F": float(np.sqrt(self.facet_sq.sum())),
            "delta": float(np.sqrt(self.delta_sq.sum())),
            "mu": float(np.sqrt(self.mu_sq.sum())),
        }

    @property
    def eta_sq(self):
        return float(self.res_sq.sum() + self.div_sq + self.facet_sq.sum()
                     + self.delta_sq.sum() + self.mu_sq.sum())

    @property
    def eta(self):
        return float(np.sqrt(self.eta_sq))


def _min_bracket(*entries):
    """Elementwise minimum over entries; ``None`` entries are skipped."""
    vals = [np.asarray(e, dtype=float) for e in entries if e is not None]
    out = vals[0]
    for v in vals[1:]:
        out = np.minimum(out, v)
    return out


def _facet_sup(coef, mesh, facets, t, cells_side=0):
    """Max of |coef| over sample points (including endpoints) on each facet."""
    ts = np.concatenate([[0.0], t, [1.0]])
    ps = PointSet.on_facets(mesh, facets, ts, side=cells_side)
    vals = field_at(coef, ps, 2)
    return np.linalg.norm(vals, axis=1).reshape(len(facets), len(ts)).max(axis=1)


def alpha_exponent(space, nu, h):
    return 1.0 if (space.kind == EQUAL_ORDER and nu < h) else 0.0


def estimate(solution, data, params=None, space=None, b=None, quad_degree=None,
             facet_convection=None):
    """Five-part estimator with unit constants.

    ``b`` overrides the convection in the cell residual; ``facet_convection``
    overrides the field whose facet sup-norm enters the facet weight (both are
    ``u_h`` for Navier-Stokes).
    """
    params = params or solution.params
    space = space or solution.space
    mesh = solution.mesh
    if params.n_cells != mesh.n_cells:
        raise ValueError("stabilization parameters do not match the mesh")
    nu = data.nu
    sigma0 = data.sigma0
    h = mesh.diameters()
    hmax = float(h.max())
    delta, mu = params.delta, params.mu

    ps, w = _cell_rule(solution, quad_degree)
    nc, nq = ps.shape
    r = cell_residual(solution, data, ps, b).reshape(nc, nq, 2)
    r_sq = np.einsum("cq,cqk->c", w, r * r)
    div = np.einsum("ncc->n", solution.u.gradients(ps)).reshape(nc, nq)
    div_sq = np.einsum("cq,cq->c", w, div * div)

    res_w = _min_bracket(1.0 / sigma0 if sigma0 > 0 else None, h ** 2 / nu, 40.0 * delta)
    res_sq = res_w * r_sq
    delta_sq = 40.0 * delta * r_sq

    if space.kind == EQUAL_ORDER:
        div_total = 160.0 * delta.max() * div_sq.sum()
    else:
        div_total = 160.0 / hmax ** 2 * delta.max() * div_sq.sum()
    total_div = div_sq.sum()
    share = div_total * div_sq / total_div if total_div > 0 else np.zeros(nc)

    alpha = alpha_exponent(space, nu, hmax)
    mu_sq = _min_bracket(40.0 * DIM * mu ** 2 / delta ** alpha, DIM * mu ** 2 / nu) * div_sq

    rule = make_quadrature(_degree(solution, quad_degree))
    t, tw = rule.edge_points, rule.edge_weights
    facets = np.arange(mesh.n_facets)
    rF = facet_residual(solution, data, facets, t)
    lengths = mesh.facet_lengths()
    rF_sq = lengths * np.einsum("q,fqk->f", tw, rF * rF)
    fc = mesh.facet_cells
    hF = np.where(fc[:, 1] >= 0, np.maximum(h[fc[:, 0]], h[np.maximum(fc[:, 1], 0)]), h[fc[:, 0]])
    conv_field = facet_convection if facet_convection is not None else (data.b if b is None else b)
    bF = _facet_sup(conv_field, mesh, facets, t)
    with np.errstate(divide="ignore"):
        b_entry = np.where(bF > 0, 40.0 / np.where(bF > 0, bF, 1.0) ** 2, np.inf)
    facet_w = _min_bracket(
        hF / nu,
        1.0 / (hF * sigma0) if sigma0 > 0 else None,
        1.0 / np.sqrt(nu * sigma0) if sigma0 > 0 else None,
        b_entry,
    )
    facet_sq = facet_w * rF_sq

    extras = {"r_sq": r_sq, "div_sq": div_sq, "rF_sq": rF_sq, "alpha": alpha}
    return ErrorEstimate(res_sq, delta_sq, mu_sq, facet_sq, float(div_total), share, extras)


def effectivity(estimate_, norm):
    err = norm.total if hasattr(norm, "total") else float(norm)
    if not err > 0.0:
        raise ValueError("effectivity undefined for a zero error norm")
    return estimate_.eta / err


# -- error norms against an analytic solution ----------------------------------


@dataclass
class NormReport:
    """Squared constituents of an error norm and derived totals."""

    constituents: dict
    omega_pres: Optional[float] = None
    pressure_l2_sq: Optional[float] = None
    kind: str = "spg"

    @property
    def total_sq(self):
        return float(sum(self.constituents.values()))

    @property
    def total(self):
        return float(np.sqrt(self.total_sq))

    @property
    def spg_p(self):
        """Norm including the weighted pressure term, when available."""
        if self.omega_pres is None or self.pressure_l2_sq is None:
            return None
        return float(np.sqrt(self.total_sq + self.pressure_l2_sq / self.omega_pres ** 2))


def _errors(solution, data, ps):
    ex = data.exact
    if ex is None:
        raise ValueError("an analytic solution is required")
    eu = ex.u(ps.x) - solution.u.values(ps)
    geu = ex.grad_u(ps.x) - solution.u.gradients(ps)
    ep = ex.p(ps.x) - solution.p.values(ps)
    gep = ex.grad_p(ps.x) - solution.p.gradients(ps)
    return eu, geu, ep, gep


def spg_error_norm(solution, data, params=None, b=None, quad_degree=None, sigma_inf=None):
    """||(u - u_h, p - p_h)||_spg and its constituents (the jump part is zero)."""
    params = params or solution.params
    ps, w = _cell_rule(solution, quad_degree)
    nc, nq = ps.shape
    eu, geu, ep, gep = _errors(solution, data, ps)
    bq = field_at(data.b if b is None else b, ps, 2)
    sq = field_at(data.sigma, ps)
    wf = w.ravel()
    delta = np.repeat(params.delta, nq)
    mu = np.repeat(params.mu, nq)
    div = geu[:, 0, 0] + geu[:, 1, 1]
    supg = np.einsum("ncj,nj->nc", geu, bq) + gep
    parts = {
        "viscous": data.nu * float(wf @ np.einsum("nij,nij->n", geu, geu)),
        "reaction": float(wf @ (sq * np.einsum("nc,nc->n", eu, eu))),
        "graddiv": float(wf @ (mu * div ** 2)),
        "jump": 0.0,
        "supg": float(wf @ (delta * np.einsum("nc,nc->n", supg, supg))),
    }
    if sigma_inf is None:
        sigma_inf = float(np.max(np.abs(sq)))
    omega = max(1.0, data.nu ** -0.5, np.sqrt(sigma_inf))
    return NormReport(parts, omega_pres=omega, pressure_l2_sq=float(wf @ ep ** 2), kind="spg")


def spg_nse_norm(solution, data, params=None, quad_degree=None):
    """(nu |grad e_u|^2 + nu |e_p|^2 + sum mu_K |div e_u|_K^2 + sum delta_K |grad e_p|_K^2)^(1/2)."""
    params = params or solution.params
    ps, w = _cell_rule(solution, quad_degree)
    nq = ps.shape[1]
    eu, geu, ep, gep = _errors(solution, data, ps)
    wf = w.ravel()
    delta = np.repeat(params.delta, nq)
    mu = np.repeat(params.mu, nq)
    div = geu[:, 0, 0] + geu[:, 1, 1]
    parts = {
        "viscous": data.nu * float(wf @ np.einsum("nij,nij->n", geu, geu)),
        "pressure": data.nu * float(wf @ ep ** 2),
        "graddiv": float(wf @ (mu * div ** 2)),
        "pspg": float(wf @ (delta * np.einsum("nc,nc->n", gep, gep))),
    }
    return NormReport(parts, kind="spg,nse")


# -- hypothesis diagnostics ----------------------------------------------------


@dataclass
class HypothesisReport:
    """Left/right sides of the interpolation hypotheses and the trailing terms.

    ``checks`` maps a name to ``(lhs, rhs)``; a hypothesis holds if lhs <= rhs.
    """

    checks: dict
    trailing: float
    error_spg_sq: float
    interp_l2_sq: float

    @property
    def holds(self):
        return {k: bool(lhs <= rhs) for k, (lhs, rhs) in self.checks.items()}

    @property
    def all_hold(self):
        return all(self.holds.values())


def interpolants(solution, data):
    """Nodal interpolants I_h u (velocity space) and I_h p (pressure space,
    shifted to zero mean when the pressure is only fixed up to a constant)."""
    ex = data.exact
    Iu = interpolate(solution.u.dofmap, ex.u)
    Ip = interpolate(solution.p.dofmap, ex.p)
    mesh = solution.mesh
    if not np.any(mesh.facet_marker[mesh.boundary_facets] == NEUMANN):
        ps, w = _cell_rule(solution)
        mean = float(w.ravel() @ Ip.values(ps)) / float(w.sum())
        Ip = FEFunction(Ip.dofmap, Ip.coefficients - mean)
    return Iu, Ip


def hypothesis_diagnostics(solution, data, params=None, space=None, quad_degree=None,
                           error_norm=None):
    params = params or solution.params
    space = space or solution.space
    ex = data.exact
    if ex is None:
        raise ValueError("hypothesis diagnostics need an analytic solution")
    mesh = solution.mesh
    nu = data.nu
    h = mesh.diameters()
    hmax = float(h.max())
    delta = params.delta
    c_inv = params.c_inv
    Iu, Ip = interpolants(solution, data)

    ps, w = _cell_rule(solution, quad_degree)
    nc, nq = ps.shape
    eu = (ex.u(ps.x) - Iu.values(ps)).reshape(nc, nq, 2)
    geu = (ex.grad_u(ps.x) - Iu.gradients(ps)).reshape(nc, nq, 2, 2)
    leu = (ex.lap_u(ps.x) - Iu.laplacians(ps)).reshape(nc, nq, 2)
    ep = (ex.p(ps.x) - Ip.values(ps)).reshape(nc, nq)
    gep = (ex.grad_p(ps.x) - Ip.gradients(ps)).reshape(nc, nq, 2)
    bq = field_at(data.b, ps, 2).reshape(nc, nq, 2)

    l2_u = np.einsum("cq,cqk->c", w, eu * eu)
    h1_u = np.einsum("cq,cqij->c", w, geu * geu)
    lap_u = np.einsum("cq,cqk->c", w, leu * leu)
    l2_p = float(np.einsum("cq,cq->", w, ep * ep))
    sres = np.einsum("cqij,cqj->cqi", geu, bq) + gep
    res = np.einsum("cq,cqk->c", w, sres * sres)

    rule = make_quadrature(_degree(solution, quad_degree))
    t, tw = rule.edge_points, rule.edge_weights
    facets = np.arange(mesh.n_facets)
    fps = PointSet.on_facets(mesh, facets, t, side=0)
    efu = (ex.u(fps.x) - Iu.values(fps)).reshape(len(facets), len(t), 2)
    facet_l2 = mesh.facet_lengths() * np.einsum("q,fqk->f", tw, efu * efu)
    bF = _facet_sup(data.b, mesh, facets, t)

    if error_norm is None:
        error_norm = spg_error_norm(solution, data, params, quad_degree=quad_degree)
    e2 = error_norm.total_sq
    alpha = alpha_exponent(space, nu, hmax)
    interp_l2 = float(l2_u.sum())

    checks = {
        "L2_delta": (float((l2_u / delta).sum()), 2 * e2),
        "H1_delta": (float((delta ** alpha * h1_u).sum()), 2 * e2),
        "L2_F_b": (float((bF ** 2 * facet_l2).sum()), 2 * e2),
        "res_delta": (float((delta * res).sum()), 2 * e2),
    }
    if space.kind == EQUAL_ORDER:
        checks["pressure"] = (np.sqrt(l2_p), 2 * np.sqrt(interp_l2))
        checks["pressure_spg"] = (l2_p, 8 * delta.max() * e2)
    else:
        checks["pressure"] = (np.sqrt(l2_p), 2 / hmax * np.sqrt(interp_l2))
        checks["pressure_spg"] = (l2_p, 8 / hmax ** 2 * delta.max() * e2)
    checks = {k: (float(a), float(b_)) for k, (a, b_) in checks.items()}

    trailing = float(16 * (delta * c_inv ** 2 * nu ** 2 / h ** 2 * h1_u).sum()
                     + 8 * (delta * nu ** 2 * lap_u).sum())
    return HypothesisReport(checks, trailing, e2, interp_l2)
