"""Bilinear forms and load functionals on P2-vector / P1-scalar spaces.

Every operator is assembled element by element into a :class:`TripletBuffer`.
Vector spaces use the interleaved numbering of :class:`DofMap`, so local
element matrices are laid out ``(node, component)`` with the component
running fastest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .fem import DofMap, Geometry, build_dofmap, edge_quadrature, eval_basis, quadrature
from .linalg import TripletBuffer
from .mesh import Mesh, Side, boundary_facets

OPERATOR_DEGREE = 4
LOAD_DEGREE = 6


def _tables(dofmap: DofMap, degree: int, geometry: Geometry):
    quad = quadrature(degree)
    vals, rgrads = eval_basis(dofmap.elem, quad.points)
    grads = geometry.grads(rgrads)  # (nt, nq, nb, 2)
    wdet = np.abs(geometry.det)[:, None] * quad.weights[None, :]  # (nt, nq)
    return quad, vals, grads, wdet


def _tensor(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    return float(K) * np.eye(2) if K.ndim == 0 else K


def _finish(rows, cols, local, shape):
    buf = TripletBuffer(shape)
    buf.add(rows, cols, local)
    return buf.finalize()


def assemble_elasticity(vspace: DofMap, gamma: float, geometry: Geometry | None = None):
    """``gamma * (eps(u), eps(v))`` on a P2 vector space."""
    geometry = geometry or Geometry.of(vspace.mesh)
    _, _, g, w = _tables(vspace, OPERATOR_DEGREE, geometry)
    nt, nb = g.shape[0], g.shape[2]
    lap = np.einsum("tq,tqia,tqja->tij", w, g, g)
    # cross[t, i, a, j, b] = sum_q w d_b phi_i d_a phi_j
    cross = np.einsum("tq,tqib,tqja->tiajb", w, g, g)
    local = 0.5 * cross
    for a in range(2):
        local[:, :, a, :, a] += 0.5 * lap
    local = gamma * local.reshape(nt, 2 * nb, 2 * nb)
    d = vspace.cell_dofs
    return _finish(d, d, local, (vspace.n_dofs, vspace.n_dofs))


def assemble_divdiv(vspace: DofMap, geometry: Geometry | None = None):
    """``(div u, div v)`` on a P2 vector space."""
    geometry = geometry or Geometry.of(vspace.mesh)
    _, _, g, w = _tables(vspace, OPERATOR_DEGREE, geometry)
    nt, nb = g.shape[0], g.shape[2]
    local = np.einsum("tq,tqia,tqjb->tiajb", w, g, g).reshape(nt, 2 * nb, 2 * nb)
    d = vspace.cell_dofs
    return _finish(d, d, local, (vspace.n_dofs, vspace.n_dofs))


def assemble_div(vspace: DofMap, sspace: DofMap, geometry: Geometry | None = None):
    """``(div u, phi)``: rows are scalar test functions, columns vector dofs."""
    geometry = geometry or Geometry.of(vspace.mesh)
    quad = quadrature(OPERATOR_DEGREE)
    psi, _ = eval_basis(sspace.elem, quad.points)
    _, _, g, w = _tables(vspace, OPERATOR_DEGREE, geometry)
    nt, nb = g.shape[0], g.shape[2]
    local = np.einsum("tq,qk,tqjb->tkjb", w, psi, g).reshape(nt, sspace.elem.n_basis, 2 * nb)
    return _finish(sspace.cell_dofs, vspace.cell_dofs, local, (sspace.n_dofs, vspace.n_dofs))


def assemble_mass(space: DofMap, geometry: Geometry | None = None):
    geometry = geometry or Geometry.of(space.mesh)
    _, vals, _, w = _tables(space, OPERATOR_DEGREE, geometry)
    local = np.einsum("tq,qi,qj->tij", w, vals, vals)
    d = space.cell_dofs
    return _finish(d, d, local, (space.n_dofs, space.n_dofs))


def assemble_diffusion(space: DofMap, K, theta_f: float = 1.0, geometry: Geometry | None = None):
    """``(1/theta_f) (K grad u, grad v)`` on a scalar space."""
    geometry = geometry or Geometry.of(space.mesh)
    K = _tensor(K)
    _, _, g, w = _tables(space, OPERATOR_DEGREE, geometry)
    local = np.einsum("tq,tqia,ab,tqjb->tij", w, g, K, g) / theta_f
    d = space.cell_dofs
    return _finish(d, d, local, (space.n_dofs, space.n_dofs))


def divergence_gradients(vspace: DofMap, geometry: Geometry | None = None) -> np.ndarray:
    """Elementwise constant ``grad(div)`` of every vector basis function.

    Returns ``(nt, nb, 2, 2)`` indexed ``[t, node, component, direction]``:
    the gradient of ``div(phi_node e_component)`` on triangle ``t``.
    """
    geometry = geometry or Geometry.of(vspace.mesh)
    Href = vspace.elem.hessians()  # (nb, 2, 2)
    Jinv = geometry.inv_jac
    # physical Hessian H = J^{-T} Href J^{-1}
    return np.einsum("tki,bkl,tlj->tbij", Jinv, Href, Jinv)


def assemble_broken_divgrad(vspace: DofMap, sspace: DofMap, K, theta_f: float = 1.0, geometry: Geometry | None = None):
    """``(1/theta_f) sum_T (K grad(div u)|_T, grad psi)_T``.

    ``div u`` of a P2 field is discontinuous, so the gradient is taken
    element by element.
    """
    geometry = geometry or Geometry.of(vspace.mesh)
    K = _tensor(K)
    H = divergence_gradients(vspace, geometry)
    _, _, gpsi, w = _tables(sspace, 1, geometry)
    area = w.sum(axis=1)
    gpsi = gpsi[:, 0]  # P1 gradients are constant
    nt, nb = H.shape[:2]
    local = np.einsum("t,tbci,ij,tkj->tkbc", area, H, K, gpsi).reshape(nt, sspace.elem.n_basis, 2 * nb) / theta_f
    return _finish(sspace.cell_dofs, vspace.cell_dofs, local, (sspace.n_dofs, vspace.n_dofs))


def assemble_rigid_motions(vspace: DofMap, geometry: Geometry | None = None):
    """``(v, r_k)`` for the rigid motions ``(1,0), (0,1), (-x2, x1)``; shape ``(3, n_dofs)``."""
    geometry = geometry or Geometry.of(vspace.mesh)
    quad, vals, _, w = _tables(vspace, OPERATOR_DEGREE, geometry)
    x = geometry.map(quad.points)
    r = np.zeros(x.shape[:2] + (3, 2))
    r[..., 0, 0] = 1.0
    r[..., 1, 1] = 1.0
    r[..., 2, 0] = -x[..., 1]
    r[..., 2, 1] = x[..., 0]
    nt, nb = x.shape[0], vals.shape[1]
    local = np.einsum("tq,qb,tqkc->tkbc", w, vals, r).reshape(nt, 3, 2 * nb)
    rows = np.broadcast_to(np.arange(3), (nt, 3))
    return _finish(rows, vspace.cell_dofs, local, (3, vspace.n_dofs))


# ---------------------------------------------------------------------------
# Load functionals
# ---------------------------------------------------------------------------


def assemble_load(f, space: DofMap, t: float = 0.0, geometry: Geometry | None = None) -> np.ndarray:
    """``(f, v)`` for ``f(x, t)`` scalar or 2-vector valued."""
    geometry = geometry or Geometry.of(space.mesh)
    quad, vals, _, w = _tables(space, LOAD_DEGREE, geometry)
    x = geometry.map(quad.points)
    nt, nq = x.shape[:2]
    fx = np.asarray(f(x.reshape(-1, 2), t), dtype=float)
    out = np.zeros(space.n_dofs)
    if space.n_components == 1:
        fx = np.broadcast_to(fx, (nt * nq,)).reshape(nt, nq)
        local = np.einsum("tq,qb,tq->tb", w, vals, fx)
    else:
        fx = np.broadcast_to(fx, (nt * nq, 2)).reshape(nt, nq, 2)
        local = np.einsum("tq,qb,tqc->tbc", w, vals, fx).reshape(nt, -1)
    np.add.at(out, space.cell_dofs, local)
    return out


def _facet_tables(space: DofMap, tag):
    """Per boundary facet: global dofs, basis values and physical points/weights."""
    mesh = space.mesh
    facets = boundary_facets(mesh, tag)
    s, ws = edge_quadrature(3)
    tris = facets.triangles
    edges = mesh.edges[facets.edges]
    # locate the facet inside its triangle to get reference coordinates
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tv = mesh.triangles[tris]  # (nf, 3)
    la = np.argmax(tv == edges[:, :1], axis=1)
    lb = np.argmax(tv == edges[:, 1:], axis=1)
    ra, rb = corners[la], corners[lb]
    ref = ra[:, None, :] + s[None, :, None] * (rb - ra)[:, None, :]  # (nf, ns, 2)
    pa = mesh.vertices[edges[:, 0]]
    pb = mesh.vertices[edges[:, 1]]
    x = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
    w = ws[None, :] * np.hypot(*(pb - pa).T)[:, None]
    vals = eval_basis(space.elem, ref.reshape(-1, 2))[0].reshape(len(tris), len(s), -1)
    return space.cell_dofs[tris], vals, x, w, facets.normal


def assemble_boundary_traction(F1, vspace: DofMap, tag, t: float = 0.0, components=(0, 1)) -> np.ndarray:
    """``<F1, v>`` on side ``tag``, restricted to the listed displacement components.

    ``F1(x, t)`` returns ``(n, 2)``; ``x`` are points on the side.
    """
    dofs, vals, x, w, _ = _facet_tables(vspace, tag)
    nf, ns = x.shape[:2]
    Fx = np.asarray(F1(x.reshape(-1, 2), t), dtype=float)
    Fx = np.broadcast_to(Fx, (nf * ns, 2)).reshape(nf, ns, 2).copy()
    mask = np.zeros(2)
    mask[list(components)] = 1.0
    Fx *= mask
    local = np.einsum("fs,fsb,fsc->fbc", w, vals, Fx).reshape(nf, -1)
    out = np.zeros(vspace.n_dofs)
    np.add.at(out, dofs, local)
    return out


def assemble_boundary_flux(phi1, sspace: DofMap, tag, t: float = 0.0) -> np.ndarray:
    """``<phi1, psi>`` on side ``tag`` for a scalar ``phi1(x, t)``."""
    dofs, vals, x, w, _ = _facet_tables(sspace, tag)
    nf, ns = x.shape[:2]
    px = np.broadcast_to(np.asarray(phi1(x.reshape(-1, 2), t), dtype=float), (nf * ns,)).reshape(nf, ns)
    local = np.einsum("fs,fsb,fs->fb", w, vals, px)
    out = np.zeros(sspace.n_dofs)
    np.add.at(out, dofs, local)
    return out


def assemble_gravity_flux(K, rho_f_g, theta_f: float, sspace: DofMap, geometry: Geometry | None = None) -> np.ndarray:
    """``(1/theta_f) (K rho_f g, grad psi)``."""
    geometry = geometry or Geometry.of(sspace.mesh)
    K = _tensor(K)
    flux = K @ np.asarray(rho_f_g, dtype=float) / theta_f
    _, _, g, w = _tables(sspace, 1, geometry)
    local = np.einsum("tq,tqbi,i->tb", w, g, flux)
    out = np.zeros(sspace.n_dofs)
    np.add.at(out, sspace.cell_dofs, local)
    return out


# ---------------------------------------------------------------------------
# Operator bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FormCatalog:
    """All operators of the discrete schemes on one mesh.

    ``elasticity`` carries the factor ``gamma``; ``diffusion`` and
    ``divgrad`` carry ``1/theta_f``.
    """

    mesh: Mesh
    geometry: Geometry
    vspace: DofMap
    sspace: DofMap
    elasticity: sps.csr_matrix
    div: sps.csr_matrix
    mass: sps.csr_matrix
    diffusion: sps.csr_matrix
    divgrad: sps.csr_matrix
    divdiv: sps.csr_matrix

    @property
    def n_tau(self) -> int:
        return self.vspace.n_dofs

    @property
    def n_scalar(self) -> int:
        return self.sspace.n_dofs


def build_forms(mesh: Mesh, gamma: float, K, theta_f: float = 1.0) -> FormCatalog:
    geometry = Geometry.of(mesh)
    vspace = build_dofmap(mesh, "P2", 2)
    sspace = build_dofmap(mesh, "P1", 1)
    return FormCatalog(
        mesh=mesh,
        geometry=geometry,
        vspace=vspace,
        sspace=sspace,
        elasticity=assemble_elasticity(vspace, gamma, geometry),
        div=assemble_div(vspace, sspace, geometry),
        mass=assemble_mass(sspace, geometry),
        diffusion=assemble_diffusion(sspace, K, theta_f, geometry),
        divgrad=assemble_broken_divgrad(vspace, sspace, K, theta_f, geometry),
        divdiv=assemble_divdiv(vspace, geometry),
    )


__all__ = [
    "FormCatalog",
    "Side",
    "assemble_boundary_flux",
    "assemble_boundary_traction",
    "assemble_broken_divgrad",
    "assemble_div",
    "assemble_divdiv",
    "assemble_diffusion",
    "assemble_elasticity",
    "assemble_gravity_flux",
    "assemble_load",
    "assemble_mass",
    "assemble_rigid_motions",
    "build_forms",
    "divergence_gradients",
]
