"""Degree-of-freedom maps, velocity/pressure space pairs and nodal interpolation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elements import reference_element
from .mesh import DIRICHLET, LOCAL_EDGES

INF_SUP = "inf-sup"
EQUAL_ORDER = "equal-order"

PAIRS = {
    "P1/P1": (1, 1),
    "P2/P1": (2, 1),
    "P2/P2": (2, 2),
    "P3/P2": (3, 2),
    "P3/P3": (3, 3),
}


@dataclass(frozen=True)
class SpacePair:
    k: int
    l: int

    def __post_init__(self):
        if self.k not in (1, 2, 3) or self.l not in (1, 2, 3):
            raise ValueError(f"unsupported pair P{self.k}/P{self.l}")
        if self.l == self.k - 1:
            if self.k < 2:
                raise ValueError("inf-sup stable pairs need k >= 2")
        elif self.l != self.k:
            raise ValueError(f"P{self.k}/P{self.l} is neither inf-sup (l=k-1) nor equal order")

    @property
    def kind(self):
        return EQUAL_ORDER if self.l == self.k else INF_SUP

    @property
    def name(self):
        return f"P{self.k}/P{self.l}"

    @classmethod
    def from_name(cls, name):
        try:
            return cls(*PAIRS[name.upper()])
        except KeyError:
            raise ValueError(f"unknown pair {name!r}; choose from {sorted(PAIRS)}") from None


class DofMap:
    """Continuous P_k numbering: vertices, then facet nodes, then cell interiors.

    Facet nodes run from the lower to the higher global vertex index of the
    facet, which makes the numbering conforming across shared facets.
    """

    def __init__(self, mesh, k):
        self.mesh = mesh
        self.element = reference_element(k)
        self.degree = k
        nv, nf, nc = mesh.n_vertices, mesh.n_facets, mesh.n_cells
        ne = k - 1
        ni = self.element.n_interior
        self.n_dofs = nv + nf * ne + nc * ni

        cells = mesh.cells
        cols = [cells]
        for i, (a, b) in enumerate(LOCAL_EDGES):
            f = mesh.cell_facets[:, i]
            forward = cells[:, a] < cells[:, b]
            j = np.arange(ne)
            pos = np.where(forward[:, None], j[None, :], (ne - 1 - j)[None, :])
            cols.append(nv + f[:, None] * ne + pos)
        cols.append(nv + nf * ne + np.arange(nc)[:, None] * ni + np.arange(ni)[None, :])
        self.cell_dofs = np.ascontiguousarray(np.concatenate(cols, axis=1))

        coords = np.empty((self.n_dofs, 2))
        origin, J = mesh.jacobians()
        phys = origin[:, None, :] + np.einsum("cij,nj->cni", J, self.element.nodes)
        coords[self.cell_dofs.ravel()] = phys.reshape(-1, 2)
        self.coordinates = coords

        bf = mesh.boundary_facets[mesh.facet_marker[mesh.boundary_facets] == DIRICHLET]
        dofs = [mesh.facets[bf].ravel()]
        if ne:
            dofs.append((nv + bf[:, None] * ne + np.arange(ne)[None, :]).ravel())
        self.dirichlet_dofs = np.unique(np.concatenate(dofs)).astype(np.int64)

    def interpolate(self, field):
        """Nodal interpolant: values of ``field`` at all global nodes."""
        return np.asarray(field(self.coordinates), dtype=float)


@dataclass
class PointSet:
    """Points given per cell in reference coordinates.

    ``cells`` and ``ref`` have shape ``(n,)`` and ``(n, 2)``; ``x`` holds the
    physical coordinates.  Quadrature point sets are flattened row-major from
    ``(n_cells, n_q)``.
    """

    cells: np.ndarray
    ref: np.ndarray
    x: np.ndarray
    shape: tuple

    @classmethod
    def from_reference(cls, mesh, cells, ref):
        cells = np.asarray(cells)
        origin, J = mesh.jacobians()
        x = origin[cells] + np.einsum("nij,nj->ni", J[cells], ref)
        return cls(cells=cells, ref=ref, x=x, shape=(len(cells),))

    @classmethod
    def from_physical(cls, mesh, cells, x):
        cells = np.asarray(cells)
        origin, J = mesh.jacobians()
        ref = np.einsum("nij,nj->ni", np.linalg.inv(J[cells]), x - origin[cells])
        return cls(cells=cells, ref=ref, x=np.asarray(x), shape=(len(cells),))

    @classmethod
    def on_facets(cls, mesh, facets, t, side=0):
        """Points ``a + t (b - a)`` on each facet, seen from ``facet_cells[:, side]``.

        Flattened row-major from ``(len(facets), len(t))``.
        """
        a = mesh.vertices[mesh.facets[facets, 0]]
        b = mesh.vertices[mesh.facets[facets, 1]]
        x = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        cells = np.repeat(mesh.facet_cells[facets, side], len(t))
        ps = cls.from_physical(mesh, cells, x.reshape(-1, 2))
        ps.shape = (len(facets), len(t))
        return ps

    @classmethod
    def quadrature(cls, mesh, points):
        nc, nq = mesh.n_cells, len(points)
        cells = np.repeat(np.arange(nc), nq)
        ref = np.tile(points, (nc, 1))
        ps = cls.from_reference(mesh, cells, ref)
        ps.shape = (nc, nq)
        return ps


class FEFunction:
    """Scalar or vector-valued finite element function on a DofMap.

    ``coefficients`` has shape ``(n_dofs,)`` or ``(ncomp, n_dofs)``.
    """

    def __init__(self, dofmap, coefficients):
        self.dofmap = dofmap
        self.coefficients = np.asarray(coefficients, dtype=float)

    @property
    def vector_valued(self):
        return self.coefficients.ndim == 2

    def _local(self, cells):
        dofs = self.dofmap.cell_dofs[cells]
        if self.vector_valued:
            return self.coefficients[:, dofs]
        return self.coefficients[dofs]

    def _inverse_jacobians(self, cells):
        _, J = self.dofmap.mesh.jacobians()
        return np.linalg.inv(J[cells])

    def values(self, ps):
        phi = self.dofmap.element.values(ps.ref)
        loc = self._local(ps.cells)
        if self.vector_valued:
            return np.einsum("cnb,nb->nc", loc, phi)
        return np.einsum("nb,nb->n", loc, phi)

    def gradients(self, ps):
        """``(n, 2)`` for scalars, ``(n, ncomp, 2)`` (row = component) for vectors."""
        dphi = self.dofmap.element.gradients(ps.ref)
        Jinv = self._inverse_jacobians(ps.cells)
        g = np.einsum("nbk,nkj->nbj", dphi, Jinv)
        loc = self._local(ps.cells)
        if self.vector_valued:
            return np.einsum("cnb,nbj->ncj", loc, g)
        return np.einsum("nb,nbj->nj", loc, g)

    def laplacians(self, ps):
        H = self.dofmap.element.hessians(ps.ref)
        Jinv = self._inverse_jacobians(ps.cells)
        # physical Hessian = J^-T H J^-1, its trace = sum_ij H_kl Jinv_ki Jinv_li
        M = np.einsum("nki,nli->nkl", Jinv, Jinv)
        lap = np.einsum("nbkl,nkl->nb", H, M)
        loc = self._local(ps.cells)
        if self.vector_valued:
            return np.einsum("cnb,nb->nc", loc, lap)
        return np.einsum("nb,nb->n", loc, lap)


def interpolate(dofmap, field):
    """Nodal Lagrange interpolant of ``field`` as an FEFunction.

    ``field`` maps an ``(n, 2)`` array of points to ``(n,)`` or ``(n, ncomp)``.
    """
    vals = dofmap.interpolate(field)
    if vals.ndim == 2:
        vals = vals.T
    return FEFunction(dofmap, vals)
