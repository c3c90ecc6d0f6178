"""Quadrature on the reference triangle {x, y >= 0, x + y <= 1} and on [0, 1].

Triangle rules are collapsed (Duffy/Stroud conical) products of a
Gauss-Jacobi rule and a Gauss-Legendre rule, so a rule with ``n`` points per
direction integrates every polynomial of total degree ``2n - 1`` exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 12


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    edge_points: np.ndarray
    edge_weights: np.ndarray
    degree: int


@lru_cache(maxsize=None)
def make_quadrature(target_degree: int) -> QuadratureRule:
    if not 1 <= target_degree <= MAX_DEGREE:
        raise ValueError(f"quadrature degree {target_degree} outside 1..{MAX_DEGREE}")
    n = (target_degree + 2) // 2

    s, ws = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (1.0 + s)
    wu = 0.25 * ws
    t, wt = roots_legendre(n)
    v = 0.5 * (1.0 + t)
    wv = 0.5 * wt

    U, V = np.meshgrid(u, v, indexing="ij")
    points = np.column_stack([U.ravel(), ((1.0 - U) * V).ravel()])
    weights = np.outer(wu, wv).ravel()

    for arr in (points, weights, v, wv):
        arr.setflags(write=False)
    return QuadratureRule(points=points, weights=weights, edge_points=v,
                          edge_weights=wv, degree=target_degree)
