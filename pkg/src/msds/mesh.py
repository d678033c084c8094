"""Uniform right-triangulations of the unit square, nesting and patches.

Vertices are numbered row-major: vertex ``(i, j)`` sits at ``(i/n, j/n)`` and
has index ``j*(n+1) + i``.  Every square cell is cut along the diagonal from
its lower-left to its upper-right corner.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError


@dataclass(frozen=True, eq=False)
class TriMesh:
    n: int
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_mask: np.ndarray

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @cached_property
    def interior(self):
        """Indices of interior vertices, ascending."""
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def edge_midpoints(self):
        """(T, 3, 2) midpoints of edges (0,1), (1,2), (2,0)."""
        p = self.vertices[self.triangles]
        return 0.5 * (p + np.roll(p, -1, axis=1))

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d2[:, 0] * d1[:, 1])

    def vertex_index(self, i, j):
        return j * (self.n + 1) + i

    def grid_coords(self, index):
        """Integer grid coordinates (i, j) of a vertex index."""
        index = np.asarray(index)
        return index % (self.n + 1), index // (self.n + 1)

    def find_vertex(self, x, y):
        """Index of the vertex at (x, y); raises if (x, y) is not a grid point."""
        i = round(x * self.n)
        j = round(y * self.n)
        if abs(i - x * self.n) > 1e-9 or abs(j - y * self.n) > 1e-9 or not (
            0 <= i <= self.n and 0 <= j <= self.n
        ):
            raise InvalidArgumentError(f"({x}, {y}) is not a vertex of the {self.n}x{self.n} mesh")
        return self.vertex_index(i, j)

    def descriptor(self):
        return {"n": self.n}


def build_uniform_mesh(n):
    """Right-triangulated mesh of [0,1]^2 with ``n`` cells per side."""
    n = int(n)
    if n < 2:
        raise InvalidArgumentError(f"need at least 2 cells per side, got {n}")
    ticks = np.arange(n + 1) / n
    X, Y = np.meshgrid(ticks, ticks)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i = i.ravel()
    j = j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([v00, v10, v11])
    triangles[1::2] = np.column_stack([v00, v11, v01])

    gi, gj = np.meshgrid(np.arange(n + 1), np.arange(n + 1))
    boundary = (gi == 0) | (gi == n) | (gj == 0) | (gj == n)
    for arr in (vertices, triangles):
        arr.setflags(write=False)
    return TriMesh(n=n, vertices=vertices, triangles=triangles, boundary_mask=boundary.ravel())


@dataclass(frozen=True, eq=False)
class NestingMap:
    coarse: TriMesh
    fine: TriMesh
    ratio: int
    fine_to_coarse_cell: np.ndarray  # coarse cell index (j*nc + i) per fine node
    coarse_to_fine_node: np.ndarray  # fine node index per coarse vertex


def nest(coarse, fine):
    if fine.n % coarse.n != 0:
        raise InvalidArgumentError(
            f"fine mesh n={fine.n} is not an integer multiple of coarse n={coarse.n}"
        )
    ratio = fine.n // coarse.n
    fi, fj = fine.grid_coords(np.arange(fine.num_vertices))
    ci = np.minimum(fi // ratio, coarse.n - 1)
    cj = np.minimum(fj // ratio, coarse.n - 1)
    gi, gj = coarse.grid_coords(np.arange(coarse.num_vertices))
    return NestingMap(
        coarse=coarse,
        fine=fine,
        ratio=ratio,
        fine_to_coarse_cell=cj * coarse.n + ci,
        coarse_to_fine_node=fine.vertex_index(gi * ratio, gj * ratio),
    )


@dataclass(frozen=True, eq=False)
class Patch:
    center_vertex: int
    layers: int
    cell_range: tuple  # (i_lo, i_hi, j_lo, j_hi), inclusive coarse cell bounds
    fine_nodes: np.ndarray
    fine_triangles: np.ndarray
    boundary_nodes: np.ndarray
    coarse_vertices: np.ndarray = field(repr=False)  # coarse interior vertices in the closed patch

    @cached_property
    def free_nodes(self):
        """Patch nodes carrying unknowns (not on the patch boundary)."""
        return np.setdiff1d(self.fine_nodes, self.boundary_nodes, assume_unique=True)

    @property
    def num_cells(self):
        i_lo, i_hi, j_lo, j_hi = self.cell_range
        return (i_hi - i_lo + 1) * (j_hi - j_lo + 1)

    def key(self):
        return self.cell_range


def default_layers(coarse_n, c=1.0):
    """ceil(c * log2(1/H)) layers, the H log(1/H) patch diameter rule."""
    return int(math.ceil(c * math.log2(coarse_n)))


def make_patch(coarse, fine, vertex, layers):
    """Union of coarse cells within ``layers`` cell layers of the cells touching
    ``vertex`` (a coarse interior vertex)."""
    nmap = nest(coarse, fine)
    vertex = int(vertex)
    if layers < 0:
        raise InvalidArgumentError("layers must be nonnegative")
    if not (0 <= vertex < coarse.num_vertices) or coarse.boundary_mask[vertex]:
        raise InvalidArgumentError(f"coarse vertex {vertex} is not an interior vertex")
    a, b = (int(v) for v in coarse.grid_coords(vertex))
    nc = coarse.n
    i_lo, i_hi = max(a - 1 - layers, 0), min(a + layers, nc - 1)
    j_lo, j_hi = max(b - 1 - layers, 0), min(b + layers, nc - 1)
    r = nmap.ratio
    fx = np.arange(i_lo * r, (i_hi + 1) * r + 1)
    fy = np.arange(j_lo * r, (j_hi + 1) * r + 1)
    FX, FY = np.meshgrid(fx, fy)
    nodes = fine.vertex_index(FX, FY).ravel()
    on_edge = (FX == fx[0]) | (FX == fx[-1]) | (FY == fy[0]) | (FY == fy[-1])
    boundary = np.sort(nodes[on_edge.ravel()])
    nodes = np.sort(nodes)

    ci, cj = np.meshgrid(np.arange(i_lo * r, (i_hi + 1) * r), np.arange(j_lo * r, (j_hi + 1) * r))
    cells = (cj * fine.n + ci).ravel()
    tris = np.sort(np.concatenate([2 * cells, 2 * cells + 1]))

    gx, gy = np.meshgrid(np.arange(i_lo, i_hi + 2), np.arange(j_lo, j_hi + 2))
    cv = coarse.vertex_index(gx, gy).ravel()
    cv = np.sort(cv[~coarse.boundary_mask[cv]])
    for arr in (nodes, tris, boundary, cv):
        arr.setflags(write=False)
    return Patch(
        center_vertex=vertex,
        layers=int(layers),
        cell_range=(i_lo, i_hi, j_lo, j_hi),
        fine_nodes=nodes,
        fine_triangles=tris,
        boundary_nodes=boundary,
        coarse_vertices=cv,
    )


@dataclass(frozen=True, eq=False)
class CoarseHat:
    vertex: int
    fine_coefficients: np.ndarray


def hat_matrix(coarse, fine):
    """Sparse (fine nodes x coarse interior vertices) matrix of coarse hat values."""
    nest(coarse, fine)  # validates the ratio
    H = coarse.h
    xy = fine.vertices
    cols, rows, vals = [], [], []
    for col, v in enumerate(coarse.interior):
        X, Y = coarse.vertices[v]
        s = (xy[:, 0] - X) / H
        t = (xy[:, 1] - Y) / H
        val = 1.0 - np.maximum(np.maximum(np.abs(s), np.abs(t)), np.abs(s - t))
        idx = np.flatnonzero(val > 1e-14)
        rows.append(idx)
        cols.append(np.full(idx.size, col))
        vals.append(val[idx])
    return sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(fine.num_vertices, coarse.interior.size),
    )


def coarse_hats(coarse, fine):
    P = hat_matrix(coarse, fine)
    return [
        CoarseHat(vertex=int(v), fine_coefficients=P[:, c].toarray().ravel())
        for c, v in enumerate(coarse.interior)
    ]
