"""Manufactured benchmark problems on the unit square.

Right-hand sides come from hand-written closed-form derivatives; the tests
cross-check them against central finite differences.
"""
from __future__ import annotations

import numpy as np
from numpy.polynomial import Polynomial as P

from .assembly import ExactSolution, ProblemData

PI = np.pi

# smooth velocity: u1 = 1000 X(x) Y(y), u2 = -2000 X2(x) Y2(y), with X' = 2 X2, Y2' = Y
_x = P([0.0, 1.0])
_X = _x ** 2 * (1 - _x) ** 4
_Y = _x ** 2 * (1 - _x) * (3 - 5 * _x)
_X2 = _x * (1 - _x) ** 3 * (1 - 3 * _x)
_Y2 = _x ** 3 * (1 - _x) ** 2


def _derivs(poly, n):
    out = [poly]
    for _ in range(n):
        out.append(out[-1].deriv())
    return out


_DX, _DY, _DX2, _DY2 = (_derivs(q, 2) for q in (_X, _Y, _X2, _Y2))


def smooth_u(pts):
    x, y = pts[:, 0], pts[:, 1]
    return np.column_stack([1000 * _X(x) * _Y(y), -2000 * _X2(x) * _Y2(y)])


def smooth_grad_u(pts):
    x, y = pts[:, 0], pts[:, 1]
    g = np.empty((len(x), 2, 2))
    g[:, 0, 0] = 1000 * _DX[1](x) * _Y(y)
    g[:, 0, 1] = 1000 * _X(x) * _DY[1](y)
    g[:, 1, 0] = -2000 * _DX2[1](x) * _Y2(y)
    g[:, 1, 1] = -2000 * _X2(x) * _DY2[1](y)
    return g


def smooth_lap_u(pts):
    x, y = pts[:, 0], pts[:, 1]
    return np.column_stack([
        1000 * (_DX[2](x) * _Y(y) + _X(x) * _DY[2](y)),
        -2000 * (_DX2[2](x) * _Y2(y) + _X2(x) * _DY2[2](y)),
    ])


def smooth_p(pts):
    x, y = pts[:, 0], pts[:, 1]
    return PI ** 2 * (x * y ** 3 * np.cos(2 * PI * x ** 2 * y)
                      - x ** 2 * y * np.sin(2 * PI * x * y)) + 0.125


def smooth_grad_p(pts):
    x, y = pts[:, 0], pts[:, 1]
    th = 2 * PI * x ** 2 * y
    ph = 2 * PI * x * y
    dAx = y ** 3 * np.cos(th) - 4 * PI * x ** 2 * y ** 4 * np.sin(th)
    dAy = 3 * x * y ** 2 * np.cos(th) - 2 * PI * x ** 3 * y ** 3 * np.sin(th)
    dBx = 2 * x * y * np.sin(ph) + 2 * PI * x ** 2 * y ** 2 * np.cos(ph)
    dBy = x ** 2 * np.sin(ph) + 2 * PI * x ** 3 * y * np.cos(ph)
    return PI ** 2 * np.column_stack([dAx - dBx, dAy - dBy])


SMOOTH_EXACT = ExactSolution(smooth_u, smooth_grad_u, smooth_lap_u, smooth_p, smooth_grad_p)


def manufactured_rhs(exact, nu, b, sigma):
    """f = -nu Lap u + (b . grad) u + sigma u + grad p."""

    def f(pts):
        bb = b(pts)
        conv = np.einsum("ncj,nj->nc", exact.grad_u(pts), bb)
        s = sigma(pts) if callable(sigma) else sigma
        s = np.asarray(s)
        if s.ndim == 1:
            s = s[:, None]
        return -nu * exact.lap_u(pts) + conv + s * exact.u(pts) + exact.grad_p(pts)

    return f


def problem_oseen_smooth(nu):
    """Polynomial velocity, trigonometric pressure; b = u, sigma = 1."""
    return ProblemData(nu=nu, b=smooth_u, sigma=1.0, sigma0=1.0,
                       f=manufactured_rhs(SMOOTH_EXACT, nu, smooth_u, 1.0),
                       dirichlet=smooth_u, exact=SMOOTH_EXACT)


def problem_nse_smooth(nu):
    """Same solution as the smooth Oseen problem for the steady Navier-Stokes
    equations: f = -nu Lap u + (u . grad) u + grad p."""
    return ProblemData(nu=nu, b=smooth_u, sigma=0.0, sigma0=0.0,
                       f=manufactured_rhs(SMOOTH_EXACT, nu, smooth_u, 0.0),
                       dirichlet=smooth_u, exact=SMOOTH_EXACT)


class _LayerPotential:
    """G(s) = s^2 (1 - exp(lam (s - 1)))^2 and its first three derivatives."""

    def __init__(self, lam):
        self.lam = lam

    def __call__(self, s, order=0):
        lam = self.lam
        e = np.exp(lam * (s - 1.0))
        E = 1.0 - e
        E1, E2, E3 = -lam * e, -lam ** 2 * e, -lam ** 3 * e
        H = E * E
        H1 = 2 * E * E1
        H2 = 2 * E1 * E1 + 2 * E * E2
        H3 = 6 * E1 * E2 + 2 * E * E3
        if order == 0:
            return s ** 2 * H
        if order == 1:
            return 2 * s * H + s ** 2 * H1
        if order == 2:
            return 2 * H + 4 * s * H1 + s ** 2 * H2
        if order == 3:
            return 6 * H1 + 6 * s * H2 + s ** 2 * H3
        raise ValueError(order)


def layer_exact(nu):
    """u = curl(G(x) G(y)) with boundary layers at x = 1 and y = 1,
    p = exp(x + y) - (e - 1)^2."""
    G = _LayerPotential(0.5 / np.sqrt(nu))
    p_mean = (np.e - 1.0) ** 2

    def u(pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.column_stack([G(x) * G(y, 1), -G(x, 1) * G(y)])

    def grad_u(pts):
        x, y = pts[:, 0], pts[:, 1]
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0] = G(x, 1) * G(y, 1)
        g[:, 0, 1] = G(x) * G(y, 2)
        g[:, 1, 0] = -G(x, 2) * G(y)
        g[:, 1, 1] = -G(x, 1) * G(y, 1)
        return g

    def lap_u(pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.column_stack([
            G(x, 2) * G(y, 1) + G(x) * G(y, 3),
            -G(x, 3) * G(y) - G(x, 1) * G(y, 2),
        ])

    def p(pts):
        return np.exp(pts[:, 0] + pts[:, 1]) - p_mean

    def grad_p(pts):
        e = np.exp(pts[:, 0] + pts[:, 1])
        return np.column_stack([e, e])

    return ExactSolution(u, grad_u, lap_u, p, grad_p)


def _unit_convection(pts):
    return np.ones((len(pts), 2))


def problem_oseen_layer(nu):
    """Layer benchmark: b = (1, 1), sigma = 0."""
    exact = layer_exact(nu)
    return ProblemData(nu=nu, b=_unit_convection, sigma=0.0, sigma0=0.0,
                       f=manufactured_rhs(exact, nu, _unit_convection, 0.0),
                       dirichlet=exact.u, exact=exact)


PROBLEMS = {
    "oseen-smooth": problem_oseen_smooth,
    "oseen-layer": problem_oseen_layer,
    "nse-smooth": problem_nse_smooth,
}
