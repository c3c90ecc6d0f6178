"""Conforming triangular meshes of the unit square.

Cells are stored counter-clockwise with the *newest vertex* in local position
0, so the refinement edge of every cell is its local edge 0 (the edge opposite
vertex 0).  Local edge ``i`` always joins the two vertices other than ``i``:

    e0 = (c1, c2),  e1 = (c2, c0),  e2 = (c0, c1)

Facets are unique vertex pairs stored as ``(min, max)``.  The first entry of
``facet_cells`` is the adjacent cell of smaller index; facet normals point out
of that cell.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DIRICHLET = 0
NEUMANN = 1

LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class DegenerateCellError(ValueError):
    pass


@dataclass(frozen=True)
class CellGeometry:
    h: float
    area: float
    origin: np.ndarray
    jacobian: np.ndarray
    inverse_jacobian: np.ndarray


def _rotate_longest_edge_first(vertices, cells):
    """Rotate each triple so that the longest edge is local edge 0."""
    p = vertices[cells]
    lengths = np.stack([
        np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
        np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
        np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
    ], axis=1)
    # ties are broken towards the lowest local index, which keeps this
    # deterministic for the right isosceles cells of the structured meshes
    shift = np.argmax(lengths - 1e-12 * np.arange(3), axis=1)
    idx = (shift[:, None] + np.arange(3)) % 3
    return np.take_along_axis(cells, idx, axis=1)


class Mesh:
    """Immutable conforming triangulation with facet adjacency.

    Parameters
    ----------
    vertices : (nv, 2) array
    cells : (nc, 3) int array
        Counter-clockwise vertex triples, newest vertex first.
    boundary_markers : dict, optional
        Maps sorted vertex pairs of boundary facets to DIRICHLET or NEUMANN.
        Boundary facets not listed default to DIRICHLET.
    level : int
        Number of refinement steps that produced this mesh.
    """

    def __init__(self, vertices, cells, boundary_markers=None, level=0):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        self.level = level
        self.vertices.setflags(write=False)
        self.cells.setflags(write=False)
        self._build_topology(boundary_markers or {})

    def _build_topology(self, markers):
        nc = len(self.cells)
        e = self.cells[:, LOCAL_EDGES].reshape(-1, 2)
        e = np.sort(e, axis=1)
        facets, inverse = np.unique(e, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        self.facets = facets
        self.cell_facets = inverse.reshape(nc, 3)

        counts = np.bincount(inverse, minlength=len(facets))
        if np.any(counts > 2):
            f = int(np.flatnonzero(counts > 2)[0])
            raise ValueError(f"facet {facets[f]} shared by more than two cells")
        owner = np.repeat(np.arange(nc), 3)
        # stable sort keeps cells in increasing order: slot 0 gets the smaller index
        order = np.argsort(inverse, kind="stable")
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        facet_cells = np.full((len(facets), 2), -1, dtype=np.int64)
        facet_cells[:, 0] = owner[order[start]]
        two = counts == 2
        facet_cells[two, 1] = owner[order[start[two] + 1]]
        self.facet_cells = facet_cells
        self.boundary_facets = np.flatnonzero(facet_cells[:, 1] < 0)
        self.interior_facets = np.flatnonzero(facet_cells[:, 1] >= 0)

        marker = np.full(len(facets), -1, dtype=np.int64)
        for f in self.boundary_facets:
            marker[f] = markers.get((int(facets[f, 0]), int(facets[f, 1])), DIRICHLET)
        self.facet_marker = marker

        for arr in (self.facets, self.cell_facets, self.facet_cells, self.facet_marker):
            arr.setflags(write=False)

    # -- sizes -------------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_facets(self):
        return len(self.facets)

    def boundary_marker_dict(self):
        return {(int(self.facets[f, 0]), int(self.facets[f, 1])): int(self.facet_marker[f])
                for f in self.boundary_facets}

    # -- geometry ----------------------------------------------------------

    def jacobians(self):
        """Affine maps ``x = origin + J @ xi`` of all cells."""
        p = self.vertices[self.cells]
        origin = p[:, 0]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        return origin, J

    def signed_areas(self):
        _, J = self.jacobians()
        return 0.5 * (J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0])

    def areas(self):
        a = self.signed_areas()
        if np.any(a <= 0.0):
            bad = int(np.flatnonzero(a <= 0.0)[0])
            raise DegenerateCellError(f"cell {bad} has non-positive area {a[bad]:.3e}")
        return a

    def edge_lengths(self):
        p = self.vertices[self.cells]
        return np.stack([
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
        ], axis=1)

    def diameters(self):
        return self.edge_lengths().max(axis=1)

    def inradius_diameters(self):
        """Diameter of the inscribed circle, 4 * area / perimeter."""
        return 4.0 * self.areas() / self.edge_lengths().sum(axis=1)

    def shape_regularity(self):
        return float(np.max(self.diameters() / self.inradius_diameters()))

    def facet_lengths(self):
        d = self.vertices[self.facets[:, 1]] - self.vertices[self.facets[:, 0]]
        return np.linalg.norm(d, axis=1)

    def facet_normals(self):
        """Unit normals pointing out of ``facet_cells[:, 0]``."""
        a = self.vertices[self.facets[:, 0]]
        b = self.vertices[self.facets[:, 1]]
        t = b - a
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        n /= np.linalg.norm(n, axis=1)[:, None]
        centroid = self.vertices[self.cells[self.facet_cells[:, 0]]].mean(axis=1)
        flip = np.einsum("ij,ij->i", n, 0.5 * (a + b) - centroid) < 0
        n[flip] *= -1.0
        return n

    def cell_geometry(self, k):
        """Diameter, area, affine map and inverse Jacobian of cell ``k``."""
        p = self.vertices[self.cells[k]]
        J = np.column_stack([p[1] - p[0], p[2] - p[0]])
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if not det > 0.0:
            raise DegenerateCellError(f"cell {k} is degenerate or clockwise (det={det:.3e})")
        h = max(np.linalg.norm(p[1] - p[0]), np.linalg.norm(p[2] - p[1]),
                np.linalg.norm(p[0] - p[2]))
        return CellGeometry(h=float(h), area=0.5 * det, origin=p[0].copy(),
                            jacobian=J, inverse_jacobian=np.linalg.inv(J))

    # -- checks ------------------------------------------------------------

    def check(self, theta=None):
        """Raise ``AssertionError`` if a mesh invariant is violated."""
        self.areas()
        assert np.all(self.facet_cells[:, 0] >= 0)
        for f, (c0, c1) in enumerate(self.facet_cells):
            for c in (c0, c1):
                if c >= 0:
                    assert set(self.facets[f]) <= set(self.cells[c]), (f, c)
                    assert f in self.cell_facets[c], (f, c)
        assert np.all(self.facet_cells[self.interior_facets, 0]
                      < self.facet_cells[self.interior_facets, 1])
        if theta is not None:
            assert self.shape_regularity() <= theta

    # -- export ------------------------------------------------------------

    def write_vtk(self, path, cell_data=None, point_data=None, title="oseen_spg mesh"):
        """Write legacy ASCII VTK (unstructured grid, triangles)."""
        lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
                 f"POINTS {self.n_vertices} double"]
        lines += [f"{x!r} {y!r} 0.0" for x, y in self.vertices]
        lines.append(f"CELLS {self.n_cells} {4 * self.n_cells}")
        lines += [f"3 {a} {b} {c}" for a, b, c in self.cells]
        lines.append(f"CELL_TYPES {self.n_cells}")
        lines += ["5"] * self.n_cells
        if cell_data:
            lines.append(f"CELL_DATA {self.n_cells}")
            for name, values in cell_data.items():
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [repr(float(v)) for v in values]
        if point_data:
            lines.append(f"POINT_DATA {self.n_vertices}")
            for name, values in point_data.items():
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [repr(float(v)) for v in values]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def dumps(self):
        """Plain-text dump: vertices, cells, boundary facet markers."""
        out = [f"vertices {self.n_vertices}"]
        out += [f"{x:.17g} {y:.17g}" for x, y in self.vertices]
        out.append(f"cells {self.n_cells}")
        out += [f"{a} {b} {c}" for a, b, c in self.cells]
        out.append(f"boundary_facets {len(self.boundary_facets)}")
        out += [f"{self.facets[f, 0]} {self.facets[f, 1]} {self.facet_marker[f]}"
                for f in self.boundary_facets]
        return "\n".join(out) + "\n"


def _midpoint_index(table, vertices, a, b):
    key = (a, b) if a < b else (b, a)
    m = table.get(key)
    if m is None:
        m = len(vertices)
        table[key] = m
        vertices.append(0.5 * (vertices[a] + vertices[b]))
    return m


def _split_markers(markers, splits):
    out = dict(markers)
    for (a, b), m in splits.items():
        if (a, b) in out:
            mk = out.pop((a, b))
            out[(min(a, m), max(a, m))] = mk
            out[(min(m, b), max(m, b))] = mk
    return out


def red_refine(mesh):
    """Uniform refinement: every cell into four by its edge midpoints."""
    vertices = list(mesh.vertices)
    table = {}
    cells = []
    for c0, c1, c2 in mesh.cells:
        m0 = _midpoint_index(table, vertices, c1, c2)
        m1 = _midpoint_index(table, vertices, c2, c0)
        m2 = _midpoint_index(table, vertices, c0, c1)
        cells += [(c0, m2, m1), (m2, c1, m0), (m1, m0, c2), (m0, m1, m2)]
    vertices = np.array(vertices)
    cells = _rotate_longest_edge_first(vertices, np.array(cells, dtype=np.int64))
    markers = _split_markers(mesh.boundary_marker_dict(), table)
    return Mesh(vertices, cells, markers, level=mesh.level + 1)


def build_unit_square(levels=0, marker=DIRICHLET):
    """Unit square split by the diagonal (0,0)-(1,1), then ``levels`` red refinements."""
    if levels < 0:
        raise ValueError("levels must be non-negative")
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    cells = _rotate_longest_edge_first(vertices, np.array([[0, 1, 2], [0, 2, 3]]))
    markers = {(0, 1): marker, (1, 2): marker, (2, 3): marker, (0, 3): marker}
    mesh = Mesh(vertices, cells, markers, level=0)
    for _ in range(levels):
        mesh = red_refine(mesh)
    return mesh


def bisect_marked(mesh, marked):
    """Newest-vertex bisection of the marked cells plus conformity closure.

    Every marked cell is bisected across its refinement edge.  The closure
    marks the refinement edge of any cell that has a marked edge, so each
    refined cell is split into 2, 3 or 4 children and no hanging node remains.
    """
    marked = sorted({int(k) for k in marked})
    if not marked:
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.n_cells:
        raise IndexError("marked cell index out of range")

    cf = mesh.cell_facets
    edge_marked = np.zeros(mesh.n_facets, dtype=bool)
    edge_marked[cf[marked, 0]] = True
    while True:
        need = edge_marked[cf].any(axis=1) & ~edge_marked[cf[:, 0]]
        if not need.any():
            break
        edge_marked[cf[need, 0]] = True

    vertices = list(mesh.vertices)
    table = {}
    cells = []
    for k, (n, a, b) in enumerate(mesh.cells):
        if not edge_marked[cf[k, 0]]:
            cells.append((n, a, b))
            continue
        m = _midpoint_index(table, vertices, a, b)
        # children keep counter-clockwise order with the new vertex first
        for child, edge in (((m, n, a), cf[k, 2]), ((m, b, n), cf[k, 1])):
            if edge_marked[edge]:
                cn, ca, cb = child
                mm = _midpoint_index(table, vertices, ca, cb)
                cells += [(mm, cn, ca), (mm, cb, cn)]
            else:
                cells.append(child)
    markers = _split_markers(mesh.boundary_marker_dict(), table)
    return Mesh(np.array(vertices), np.array(cells, dtype=np.int64), markers,
                level=mesh.level + 1)


def uniform_bisection(mesh):
    return bisect_marked(mesh, range(mesh.n_cells))
