"""Structured triangulations of axis-aligned rectangles.

Boundary sides are tagged counter-clockwise starting from the right side:
``RIGHT`` (1), ``BOTTOM`` (2), ``LEFT`` (3), ``TOP`` (4).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Side(IntEnum):
    RIGHT = 1
    BOTTOM = 2
    LEFT = 3
    TOP = 4


_NORMALS = {
    Side.RIGHT: (1.0, 0.0),
    Side.BOTTOM: (0.0, -1.0),
    Side.LEFT: (-1.0, 0.0),
    Side.TOP: (0.0, 1.0),
}


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh of a rectangle.

    Attributes
    ----------
    vertices : (nv, 2) array
    triangles : (nt, 3) int array, counter-clockwise
    edges : (ne, 2) int array, sorted vertex pairs
    tri_edges : (nt, 3) int array
        Edge index of local edges (0,1), (1,2), (2,0) of every triangle.
    edge_tris : (ne, 2) int array
        Adjacent triangles; ``-1`` in the second slot for boundary edges.
    boundary_edges : (nb,) int array
    boundary_tags : (nb,) int array of :class:`Side` values
    h : float
        Maximum edge length.
    cell_size : float
        Width of the structured cells (``max(dx, dy)``); the value used to
        label meshes in convergence tables.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    edge_tris: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    h: float
    cell_size: float
    bounds: tuple[float, float, float, float]
    shape: tuple[int, int]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def area(self) -> float:
        x0, x1, y0, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_facets(self, tag) -> "FacetSet":
        return boundary_facets(self, tag)

    def locate(self, point):
        return locate(self, point)


@dataclass(frozen=True)
class FacetSet:
    """Boundary edges on one side, ordered along the side."""

    tag: Side
    edges: np.ndarray
    triangles: np.ndarray
    endpoints: np.ndarray  # (nf, 2, 2) coordinates
    normal: np.ndarray  # outward unit normal, shared by all facets of a side

    def __len__(self):
        return len(self.edges)

    @property
    def lengths(self) -> np.ndarray:
        d = self.endpoints[:, 1] - self.endpoints[:, 0]
        return np.hypot(d[:, 0], d[:, 1])


def build_rect(domain=(0.0, 1.0, 0.0, 1.0), nx: int = 4, ny: int | None = None, diagonal: str = "down") -> Mesh:
    """Split an ``nx`` by ``ny`` grid of cells into two triangles each.

    ``diagonal='down'`` cuts every cell from its upper-left to its lower-right
    corner, ``'up'`` from lower-left to upper-right.

    ``domain`` is ``(x0, x1, y0, y1)``.
    """
    ny = nx if ny is None else ny
    x0, x1, y0, y1 = map(float, domain)
    if nx < 1 or ny < 1:
        raise MeshError(f"need at least one cell per direction, got nx={nx}, ny={ny}")
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {domain}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    # two triangles per cell, interleaved so cell c owns triangles 2c, 2c+1
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    if diagonal == "up":
        triangles[0::2] = np.column_stack([v00, v10, v11])
        triangles[1::2] = np.column_stack([v00, v11, v01])
    elif diagonal == "down":
        triangles[0::2] = np.column_stack([v00, v10, v01])
        triangles[1::2] = np.column_stack([v10, v11, v01])
    else:
        raise MeshError(f"diagonal must be 'up' or 'down', got {diagonal!r}")

    local = np.array([[0, 1], [1, 2], [2, 0]])
    all_edges = np.sort(triangles[:, local].reshape(-1, 2), axis=1)
    edges, inverse = np.unique(all_edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    tri_edges = inverse.reshape(-1, 3)

    edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
    owner = np.repeat(np.arange(len(triangles)), 3)
    order = np.argsort(inverse, kind="stable")
    counts = np.bincount(inverse, minlength=len(edges))
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    edge_tris[:, 0] = owner[order[starts]]
    two = counts == 2
    edge_tris[two, 1] = owner[order[starts[two] + 1]]

    boundary_edges = np.flatnonzero(~two)
    mid = vertices[edges[boundary_edges]].mean(axis=1)
    dx, dy = (x1 - x0) / nx, (y1 - y0) / ny
    tol = 1e-9 * min(dx, dy)
    tags = np.zeros(len(boundary_edges), dtype=np.int64)
    tags[np.abs(mid[:, 0] - x1) < tol] = Side.RIGHT
    tags[np.abs(mid[:, 1] - y0) < tol] = Side.BOTTOM
    tags[np.abs(mid[:, 0] - x0) < tol] = Side.LEFT
    tags[np.abs(mid[:, 1] - y1) < tol] = Side.TOP
    if np.any(tags == 0):
        raise MeshError("boundary edge not on any side of the rectangle")

    d = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    h = float(np.hypot(d[:, 0], d[:, 1]).max())

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        tri_edges=tri_edges,
        edge_tris=edge_tris,
        boundary_edges=boundary_edges,
        boundary_tags=tags,
        h=h,
        cell_size=max(dx, dy),
        bounds=(x0, x1, y0, y1),
        shape=(nx, ny),
    )


def unit_square(n: int) -> Mesh:
    return build_rect((0.0, 1.0, 0.0, 1.0), n, n)


def outward_normal(tag) -> np.ndarray:
    """Outward unit normal of a rectangle side."""
    return np.array(_NORMALS[Side(tag)], dtype=float)


def boundary_facets(mesh: Mesh, tag) -> FacetSet:
    """All boundary edges on side ``tag`` with the outward unit normal."""
    tag = Side(tag)
    sel = mesh.boundary_edges[mesh.boundary_tags == tag]
    ends = mesh.vertices[mesh.edges[sel]]
    # order along the side
    axis = 1 if tag in (Side.RIGHT, Side.LEFT) else 0
    order = np.argsort(ends[:, :, axis].mean(axis=1))
    sel, ends = sel[order], ends[order]
    return FacetSet(
        tag=tag,
        edges=sel,
        triangles=mesh.edge_tris[sel, 0],
        endpoints=ends,
        normal=np.array(_NORMALS[tag]),
    )


def locate(mesh: Mesh, point) -> tuple[int, np.ndarray]:
    """Find a triangle containing ``point`` and its barycentric coordinates.

    Barycentric coordinates are ordered like the triangle's vertices.
    """
    x, y = map(float, point)
    x0, x1, y0, y1 = mesh.bounds
    nx, ny = mesh.shape
    dx, dy = (x1 - x0) / nx, (y1 - y0) / ny
    eps = 1e-12 * max(x1 - x0, y1 - y0)
    if not (x0 - eps <= x <= x1 + eps and y0 - eps <= y <= y1 + eps):
        raise MeshError(f"point {point} lies outside the domain {mesh.bounds}")
    i = min(max(int(np.floor((x - x0) / dx)), 0), nx - 1)
    j = min(max(int(np.floor((y - y0) / dy)), 0), ny - 1)
    # the cell owns triangles 2c and 2c+1; keep the one the point is most inside
    cell = j * nx + i
    cands = [barycentric(mesh.vertices[mesh.triangles[k]], (x, y)) for k in (2 * cell, 2 * cell + 1)]
    k = int(np.argmax([b.min() for b in cands]))
    tri, bary = 2 * cell + k, cands[k]
    return tri, np.clip(bary, 0.0, 1.0) / np.clip(bary, 0.0, 1.0).sum()


def barycentric(corners: np.ndarray, point) -> np.ndarray:
    a, b, c = corners
    T = np.column_stack([b - a, c - a])
    l12 = np.linalg.solve(T, np.asarray(point, dtype=float) - a)
    return np.array([1.0 - l12.sum(), l12[0], l12[1]])
