"""Lagrange P1/P2 elements on triangles, quadrature and degree-of-freedom maps."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import Mesh, Side

_GRAD_L = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_EDGES = ((0, 1), (1, 2), (2, 0))


# ---------------------------------------------------------------------------
# Reference elements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceElement:
    """Lagrange element on the triangle with vertices (0,0), (1,0), (0,1).

    P2 local nodes are the three vertices followed by the midpoints of the
    edges (0,1), (1,2), (2,0).
    """

    kind: str
    degree: int
    nodes: np.ndarray

    @property
    def n_basis(self) -> int:
        return len(self.nodes)

    def eval(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Basis values ``(npts, nb)`` and reference gradients ``(npts, nb, 2)``."""
        return eval_basis(self, points)

    def hessians(self) -> np.ndarray:
        """Constant reference Hessians ``(nb, 2, 2)``."""
        if self.degree == 1:
            return np.zeros((3, 2, 2))
        H = np.empty((6, 2, 2))
        for i in range(3):
            H[i] = 4.0 * np.outer(_GRAD_L[i], _GRAD_L[i])
        for k, (a, b) in enumerate(_EDGES):
            H[3 + k] = 4.0 * (np.outer(_GRAD_L[a], _GRAD_L[b]) + np.outer(_GRAD_L[b], _GRAD_L[a]))
        return H


P1 = ReferenceElement("P1", 1, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
P2 = ReferenceElement(
    "P2",
    2,
    np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]),
)


def element(kind: str) -> ReferenceElement:
    try:
        return {"P1": P1, "P2": P2}[kind.upper()]
    except KeyError:
        raise ValueError(f"unknown element {kind!r}") from None


def eval_basis(elem: ReferenceElement, points) -> tuple[np.ndarray, np.ndarray]:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    L = np.stack([1.0 - x - y, x, y], axis=1)  # (n, 3)
    if elem.degree == 1:
        vals = L
        grads = np.broadcast_to(_GRAD_L, (len(pts), 3, 2)).copy()
        return vals, grads
    n = len(pts)
    vals = np.empty((n, 6))
    grads = np.empty((n, 6, 2))
    for i in range(3):
        vals[:, i] = L[:, i] * (2.0 * L[:, i] - 1.0)
        grads[:, i] = (4.0 * L[:, i] - 1.0)[:, None] * _GRAD_L[i]
    for k, (a, b) in enumerate(_EDGES):
        vals[:, 3 + k] = 4.0 * L[:, a] * L[:, b]
        grads[:, 3 + k] = 4.0 * (L[:, b, None] * _GRAD_L[a] + L[:, a, None] * _GRAD_L[b])
    return vals, grads


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle; weights sum to the reference area 1/2."""

    degree: int
    barycentric: np.ndarray  # (nq, 3)
    weights: np.ndarray  # (nq,)

    @property
    def points(self) -> np.ndarray:
        return self.barycentric[:, 1:]

    def __len__(self):
        return len(self.weights)


def _orbit(a=None, b=None, c=None):
    if a is None:
        return [(1 / 3, 1 / 3, 1 / 3)]
    if c is None:  # (a, b, b)
        return [(a, b, b), (b, a, b), (b, b, a)]
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


# Symmetric Gauss rules (Dunavant); weights normalised to unit area.
_RULES = {
    1: [(1.0, _orbit())],
    2: [(1 / 3, _orbit(2 / 3, 1 / 6))],
    4: [
        (0.223381589678011, _orbit(0.108103018168070, 0.445948490915965)),
        (0.109951743655322, _orbit(0.816847572980459, 0.091576213509771)),
    ],
    5: [
        (0.225, _orbit()),
        (0.132394152788506, _orbit(0.059715871789770, 0.470142064105115)),
        (0.125939180544827, _orbit(0.797426985353087, 0.101286507323456)),
    ],
    6: [
        (0.116786275726379, _orbit(0.501426509658179, 0.249286745170910)),
        (0.050844906370207, _orbit(0.873821971016996, 0.063089014491502)),
        (0.082851075618374, _orbit(0.053145049844817, 0.310352451033784, 0.636502499121399)),
    ],
}


@lru_cache(maxsize=None)
def quadrature(degree: int) -> QuadratureRule:
    """Symmetric rule exact for polynomials of total degree ``degree`` (0..6)."""
    if not 0 <= degree <= 6:
        raise ValueError(f"no quadrature rule of degree {degree} (supported: 0..6)")
    chosen = min(d for d in _RULES if d >= max(degree, 1))
    bary, w = [], []
    for weight, pts in _RULES[chosen]:
        bary.extend(pts)
        w.extend([weight] * len(pts))
    bary = np.array(bary)
    w = np.array(w)
    w = 0.5 * w / w.sum()
    return QuadratureRule(chosen, bary, w)


@lru_cache(maxsize=None)
def edge_quadrature(n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points on [0, 1] and weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# Geometry and degree-of-freedom maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Geometry:
    """Affine maps ``x = J xhat + x0`` of every triangle."""

    origin: np.ndarray  # (nt, 2)
    jac: np.ndarray  # (nt, 2, 2)
    inv_jac: np.ndarray  # (nt, 2, 2)
    det: np.ndarray  # (nt,)

    @classmethod
    def of(cls, mesh: Mesh) -> "Geometry":
        p = mesh.vertices[mesh.triangles]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        return cls(p[:, 0], J, np.linalg.inv(J), np.linalg.det(J))

    def map(self, ref_points) -> np.ndarray:
        """Physical coordinates ``(nt, npts, 2)`` of reference points."""
        ref = np.atleast_2d(ref_points)
        return self.origin[:, None, :] + np.einsum("tij,qj->tqi", self.jac, ref)

    def grads(self, ref_grads) -> np.ndarray:
        """Map reference gradients ``(nq, nb, 2)`` to physical ``(nt, nq, nb, 2)``."""
        return np.einsum("qbj,tji->tqbi", ref_grads, self.inv_jac)


@dataclass(frozen=True)
class DofMap:
    """Global numbering of a continuous Lagrange space.

    Scalar nodes are numbered vertices first, then edges (P2). Vector fields
    interleave components node by node: ``dof = n_components*node + c``.
    """

    mesh: Mesh
    elem: ReferenceElement
    n_components: int
    cell_nodes: np.ndarray  # (nt, nb)
    node_coords: np.ndarray  # (nn, 2)

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def n_dofs(self) -> int:
        return self.n_components * self.n_nodes

    @property
    def cell_dofs(self) -> np.ndarray:
        """(nt, nb*nc) global indices, local order node-major/component-minor."""
        nc = self.n_components
        if nc == 1:
            return self.cell_nodes
        d = nc * self.cell_nodes[:, :, None] + np.arange(nc)
        return d.reshape(len(self.cell_nodes), -1)

    def boundary_nodes(self, tag) -> np.ndarray:
        m = self.mesh
        edges = m.boundary_edges[m.boundary_tags == Side(tag)]
        nodes = [m.edges[edges].ravel()]
        if self.elem.degree == 2:
            nodes.append(m.n_vertices + edges)
        return np.unique(np.concatenate(nodes))

    def boundary_dofs(self, tag, component: int = 0) -> np.ndarray:
        return self.n_components * self.boundary_nodes(tag) + component

    def all_boundary_nodes(self) -> np.ndarray:
        return np.unique(np.concatenate([self.boundary_nodes(s) for s in Side]))


def build_dofmap(mesh: Mesh, elem, n_components: int = 1) -> DofMap:
    elem = element(elem) if isinstance(elem, str) else elem
    if elem.degree == 1:
        cell_nodes = mesh.triangles
        coords = mesh.vertices
    else:
        cell_nodes = np.hstack([mesh.triangles, mesh.n_vertices + mesh.tri_edges])
        coords = np.vstack([mesh.vertices, mesh.vertices[mesh.edges].mean(axis=1)])
    return DofMap(mesh, elem, n_components, cell_nodes, coords)


# ---------------------------------------------------------------------------
# Interpolation and evaluation
# ---------------------------------------------------------------------------


def interpolate(f, dofmap: DofMap, t: float = 0.0) -> np.ndarray:
    """Nodal interpolant of ``f(x, t)``; ``x`` has shape ``(n, 2)``."""
    vals = np.asarray(f(dofmap.node_coords, t), dtype=float)
    nc = dofmap.n_components
    if nc == 1:
        return np.broadcast_to(vals, (dofmap.n_nodes,)).astype(float).copy()
    vals = np.broadcast_to(vals, (dofmap.n_nodes, nc))
    return np.ascontiguousarray(vals).reshape(-1).copy()


def eval_field(coeffs, dofmap: DofMap, triangle: int, ref_point, geometry: Geometry | None = None):
    """Value, physical gradient and (vector fields) divergence at one point.

    Returns ``(value, grad, div)``; ``grad[i, j] = d u_i / d x_j`` for vector
    fields, ``div`` is ``None`` for scalars.
    """
    geometry = geometry or Geometry.of(dofmap.mesh)
    vals, rgrads = eval_basis(dofmap.elem, ref_point)
    grads = rgrads[0] @ geometry.inv_jac[triangle]  # (nb, 2)
    local = np.asarray(coeffs)[dofmap.cell_dofs[triangle]]
    nc = dofmap.n_components
    if nc == 1:
        return float(vals[0] @ local), grads.T @ local, None
    U = local.reshape(-1, nc)  # (nb, nc)
    value = vals[0] @ U
    G = U.T @ grads  # (nc, 2)
    return value, G, float(np.trace(G))


def field_at_quadrature(coeffs, dofmap: DofMap, quad: QuadratureRule, geometry: Geometry | None = None):
    """Values ``(nt, nq[, nc])`` and gradients ``(nt, nq[, nc], 2)`` at every quadrature point."""
    geometry = geometry or Geometry.of(dofmap.mesh)
    vals, rgrads = eval_basis(dofmap.elem, quad.points)
    grads = geometry.grads(rgrads)  # (nt, nq, nb, 2)
    local = np.asarray(coeffs)[dofmap.cell_dofs]
    nc = dofmap.n_components
    if nc == 1:
        return np.einsum("qb,tb->tq", vals, local), np.einsum("tqbi,tb->tqi", grads, local)
    U = local.reshape(len(local), -1, nc)
    return np.einsum("qb,tbc->tqc", vals, U), np.einsum("tqbi,tbc->tqci", grads, U)


def broken_divergence(tau, dofmap: DofMap, geometry: Geometry | None = None) -> np.ndarray:
    """Vertex values ``(nt, 3)`` of the elementwise-linear ``div tau`` of a P2 field."""
    geometry = geometry or Geometry.of(dofmap.mesh)
    _, rgrads = eval_basis(dofmap.elem, P1.nodes)
    grads = geometry.grads(rgrads)  # (nt, 3, nb, 2)
    U = np.asarray(tau)[dofmap.cell_dofs].reshape(dofmap.mesh.n_triangles, -1, 2)
    return np.einsum("tvbi,tbi->tv", grads, U)
