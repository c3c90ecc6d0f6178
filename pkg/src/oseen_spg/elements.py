"""Lagrange elements P1-P3 on the reference triangle."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .mesh import LOCAL_EDGES

VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _lattice(k):
    """Nodes ordered: vertices, edge nodes (e0, e1, e2, each from its first
    to its second vertex), then interior nodes."""
    nodes = [v for v in VERTICES]
    for a, b in LOCAL_EDGES:
        for j in range(1, k):
            nodes.append(VERTICES[a] + (j / k) * (VERTICES[b] - VERTICES[a]))
    for i in range(1, k):
        for j in range(1, k - i):
            nodes.append(np.array([j / k, i / k]))
    return np.array(nodes)


class ReferenceElement:
    """Nodal Lagrange basis of degree ``k`` with exact derivatives.

    Basis functions are stored as coefficients in the monomial basis
    ``x**i * y**j`` (``i + j <= k``), so values, gradients and Hessians are
    polynomial evaluations without any differencing.
    """

    def __init__(self, k: int):
        if k not in (1, 2, 3):
            raise ValueError(f"unsupported polynomial degree {k}")
        self.degree = k
        self.nodes = _lattice(k)
        self.exponents = np.array([(i, d - i) for d in range(k + 1) for i in range(d, -1, -1)])
        vander = self._monomials(self.nodes)
        self.coefficients = np.linalg.inv(vander)
        self.n_basis = len(self.nodes)
        self.n_edge = k - 1
        self.n_interior = self.n_basis - 3 - 3 * (k - 1)

    def _monomials(self, pts):
        x = pts[:, 0:1]
        y = pts[:, 1:2]
        i = self.exponents[:, 0]
        j = self.exponents[:, 1]
        return x ** i * y ** j

    def _monomial_derivs(self, pts, dx, dy):
        x = pts[:, 0:1]
        y = pts[:, 1:2]
        i = self.exponents[:, 0]
        j = self.exponents[:, 1]
        ci = np.ones_like(i, dtype=float)
        for s in range(dx):
            ci = ci * (i - s)
        cj = np.ones_like(j, dtype=float)
        for s in range(dy):
            cj = cj * (j - s)
        pi = np.maximum(i - dx, 0)
        pj = np.maximum(j - dy, 0)
        return ci * cj * x ** pi * y ** pj

    def values(self, pts):
        return self._monomials(np.atleast_2d(pts)) @ self.coefficients

    def gradients(self, pts):
        pts = np.atleast_2d(pts)
        gx = self._monomial_derivs(pts, 1, 0) @ self.coefficients
        gy = self._monomial_derivs(pts, 0, 1) @ self.coefficients
        return np.stack([gx, gy], axis=-1)

    def hessians(self, pts):
        pts = np.atleast_2d(pts)
        hxx = self._monomial_derivs(pts, 2, 0) @ self.coefficients
        hxy = self._monomial_derivs(pts, 1, 1) @ self.coefficients
        hyy = self._monomial_derivs(pts, 0, 2) @ self.coefficients
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -1)

    def eval_basis(self, pts):
        """Values ``(n, nb)``, gradients ``(n, nb, 2)`` and Hessians ``(n, nb, 2, 2)``."""
        return self.values(pts), self.gradients(pts), self.hessians(pts)


@lru_cache(maxsize=None)
def reference_element(k: int) -> ReferenceElement:
    return ReferenceElement(k)
