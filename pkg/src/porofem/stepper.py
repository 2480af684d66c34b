"""Backward-Euler time stepping for the (tau, delta, varpi) formulation and
for the original displacement-pressure formulation.

The reformulated scheme solves, each step, a generalized Stokes problem for
the displacement ``tau`` and the auxiliary field ``delta`` coupled to a
diffusion problem for ``varpi = a0 p + b0 div tau``. With ``theta = 1`` the
three fields are solved together; with ``theta = 0`` the Stokes block is
solved first with the lagged ``varpi`` and the diffusion problem afterwards.
Pressure and volumetric strain are then recovered elementwise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps

from . import assembly
from .assembly import FormCatalog, build_forms
from .fem import P1, broken_divergence, eval_basis, interpolate
from .linalg import ConstrainedSolver, SolverError, TripletBuffer
from .mesh import Mesh, Side
from .params import CheckedParams, PhysicalParams, validate

Field = Callable[[np.ndarray, float], np.ndarray]


class SchemeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Problem description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DisplacementBC:
    """``tau[component] = value(x, t)`` on side ``side``.

    ``where(x) -> bool mask`` restricts the condition to part of the side.
    """

    side: Side
    component: int
    value: Field
    where: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class SideData:
    side: Side
    value: Field


@dataclass(frozen=True)
class BCSpec:
    """Boundary program of one problem.

    ``tractions`` hold the total traction ``F1(x, t)`` (2-vectors),
    ``fluxes`` the inflow ``phi1(x, t)`` and ``pressure`` Dirichlet data
    ``p_D(x, t)``. Tractions act only on displacement components that are
    not fully prescribed on the same side.
    """

    displacement: tuple = ()
    tractions: tuple = ()
    fluxes: tuple = ()
    pressure: tuple = ()

    def traction_components(self, side) -> tuple:
        clamped = {bc.component for bc in self.displacement if bc.side == side and bc.where is None}
        return tuple(c for c in (0, 1) if c not in clamped)


def _zero_vec(x, t=0.0):
    return np.zeros((len(x), 2))


def _zero(x, t=0.0):
    return np.zeros(len(x))


@dataclass(frozen=True)
class Case:
    """Domain, material, data and boundary program of a simulation."""

    name: str
    mesh: Mesh
    params: CheckedParams
    bc: BCSpec = BCSpec()
    body_force: Optional[Field] = None
    source: Optional[Field] = None
    tau0: Field = _zero_vec
    p0: Field = _zero
    delta0: Optional[Field] = None
    # exact varpi(x, t); used for pressure Dirichlet data when known
    varpi_exact: Optional[Field] = None
    rigid_motions: bool = False

    @classmethod
    def make(cls, name, mesh, params, **kw) -> "Case":
        if isinstance(params, PhysicalParams):
            params = validate(params)
        return cls(name, mesh, params, **kw)


@dataclass(frozen=True)
class SchemeConfig:
    """``theta`` selects the coupled (1) or decoupled (0) variant.

    ``pressure_bc`` chooses how pressure Dirichlet data reach the coupled
    solve: ``"implicit"`` replaces the boundary rows of the ``varpi``
    equation by the reconstruction identity at the new time level,
    ``"lagged"`` prescribes ``varpi`` from the previous step's ``delta`` and
    rate. The decoupled variant always uses the freshly solved values.
    """

    theta: int = 1
    dt: float = 0.01
    T: float = 1.0
    stability_constant: float = 1.0
    pressure_bc: str = "implicit"
    solver_rtol: float = 1e-10

    def __post_init__(self):
        if self.theta not in (0, 1):
            raise SchemeError(f"theta must be 0 or 1, got {self.theta}")
        if not self.dt > 0:
            raise SchemeError(f"time step must be positive, got {self.dt}")
        if not self.T >= 0:
            raise SchemeError(f"final time must be non-negative, got {self.T}")
        if self.pressure_bc not in ("implicit", "lagged"):
            raise SchemeError(f"pressure_bc must be 'implicit' or 'lagged', got {self.pressure_bc!r}")
        if not self.solver_rtol > 0:
            raise SchemeError(f"solver tolerance must be positive, got {self.solver_rtol}")

    @property
    def n_steps(self) -> int:
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise SchemeError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        return int(round(n))

    def check_stability(self, h: float) -> bool:
        """Warn when the decoupled variant runs with ``dt > c h^2``."""
        ok = self.theta == 1 or self.dt <= self.stability_constant * h * h
        if not ok:
            warnings.warn(
                f"decoupled scheme with dt={self.dt:g} > {self.stability_constant:g}*h^2={self.stability_constant * h * h:g}",
                RuntimeWarning,
                stacklevel=3,
            )
        return ok


@dataclass(frozen=True)
class State:
    """Coefficients at ``t`` plus the elementwise pressure/strain reconstruction.

    Broken fields are ``(n_triangles, 3)`` vertex values of elementwise
    linear functions. ``rate`` is the broken ``d_t div tau`` and
    ``varpi_stage`` the ``varpi`` used in the reconstruction.
    """

    n: int
    t: float
    tau: np.ndarray
    delta: np.ndarray
    varpi: np.ndarray
    tau_prev: np.ndarray
    rate: np.ndarray
    varpi_stage: np.ndarray
    p_broken: np.ndarray
    q_broken: np.ndarray


@dataclass(frozen=True)
class OriginalState:
    """Displacement and continuous pressure of the two-field scheme."""

    n: int
    t: float
    tau: np.ndarray
    p: np.ndarray
    p_broken: np.ndarray


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def nodal_average(broken: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Area-weighted vertex average of an elementwise linear field."""
    area = mesh.triangle_areas()
    num = np.zeros(mesh.n_vertices)
    den = np.zeros(mesh.n_vertices)
    np.add.at(num, mesh.triangles, broken * area[:, None])
    np.add.at(den, mesh.triangles, np.broadcast_to(area[:, None], broken.shape))
    return num / den


def nodal_divergence(V, geometry) -> sps.csr_matrix:
    """Matrix mapping P2 coefficients to the area-weighted vertex average of the broken divergence."""
    mesh = V.mesh
    _, rgrads = eval_basis(V.elem, P1.nodes)
    grads = geometry.grads(rgrads)  # (nt, 3, nb, 2)
    area = mesh.triangle_areas()
    den = np.zeros(mesh.n_vertices)
    np.add.at(den, mesh.triangles, np.broadcast_to(area[:, None], mesh.triangles.shape))
    weight = area[:, None] / den[mesh.triangles]  # (nt, 3)
    local = (weight[:, :, None, None] * grads).reshape(mesh.n_triangles, 3, -1)
    buf = TripletBuffer((mesh.n_vertices, V.n_dofs))
    buf.add(mesh.triangles, V.cell_dofs, local)
    return buf.finalize()


def reconstruct(params, delta, varpi_stage, rate, mesh: Mesh):
    """Broken ``p`` and ``q`` from nodal ``delta``, ``varpi`` and the broken rate."""
    tri = mesh.triangles
    c1, c2, c3, ls = params.chi1, params.chi2, params.chi3, params.lambda_star
    d, v = delta[tri], varpi_stage[tri]
    p = c1 * d + c2 * v + ls * c1 * rate
    q = c1 * v - c3 * d - ls * c3 * rate
    return p, q


class _Discretization:
    """Operators, boundary dof sets and load assembly for one case."""

    def __init__(self, case: Case, forms: FormCatalog | None = None):
        self.case = case
        prm = case.params
        self.forms = forms or build_forms(case.mesh, prm.gamma, prm.K, prm.theta_f)
        f = self.forms
        self.V, self.S = f.vspace, f.sspace
        self.nV, self.nS = f.n_tau, f.n_scalar
        self.rigid = assembly.assemble_rigid_motions(self.V, f.geometry) if case.rigid_motions else None
        self.gravity = None
        if np.any(prm.rho_f_g != 0):
            self.gravity = assembly.assemble_gravity_flux(prm.K, prm.rho_f_g, prm.theta_f, self.S, f.geometry)

        # displacement constraints, grouped so values can be refreshed in time
        groups = []
        for bc in case.bc.displacement:
            nodes = self.V.boundary_nodes(bc.side)
            if bc.where is not None:
                nodes = nodes[np.asarray(bc.where(self.V.node_coords[nodes]), dtype=bool)]
            groups.append((bc, nodes))
        self._tau_groups = groups
        tau_dofs = [2 * nodes + bc.component for bc, nodes in groups]
        self.tau_dofs = np.unique(np.concatenate(tau_dofs)) if tau_dofs else np.zeros(0, np.int64)
        pn = [self.S.boundary_nodes(bc.side) for bc in case.bc.pressure]
        self.p_nodes = np.unique(np.concatenate(pn)) if pn else np.zeros(0, np.int64)
        self._p_side = {}
        for bc in case.bc.pressure:
            for node in self.S.boundary_nodes(bc.side):
                self._p_side.setdefault(int(node), bc)

    # boundary values ---------------------------------------------------------
    def tau_values(self, t: float) -> np.ndarray:
        vals = np.zeros(self.nV)
        seen = np.zeros(self.nV, dtype=bool)
        for bc, nodes in self._tau_groups:
            dofs = 2 * nodes + bc.component
            v = np.broadcast_to(np.asarray(bc.value(self.V.node_coords[nodes], t), dtype=float), (len(nodes),))
            clash = seen[dofs] & ~np.isclose(vals[dofs], v, rtol=1e-12, atol=1e-14)
            if clash.any():
                raise SchemeError(f"conflicting displacement data at dof {dofs[clash][0]}")
            vals[dofs] = v
            seen[dofs] = True
        return vals[self.tau_dofs]

    def pressure_values(self, t: float) -> np.ndarray:
        x = self.S.node_coords[self.p_nodes]
        out = np.empty(len(self.p_nodes))
        for k, node in enumerate(self.p_nodes):
            out[k] = float(np.asarray(self._p_side[int(node)].value(x[k : k + 1], t)).reshape(-1)[0])
        return out

    # loads -----------------------------------------------------------------
    def tau_load(self, t: float) -> np.ndarray:
        case, g = self.case, self.forms.geometry
        b = np.zeros(self.nV)
        if case.body_force is not None:
            b += assembly.assemble_load(case.body_force, self.V, t, g)
        for tr in case.bc.tractions:
            comps = case.bc.traction_components(tr.side)
            if comps:
                b += assembly.assemble_boundary_traction(tr.value, self.V, tr.side, t, comps)
        return b

    def flow_load(self, t: float) -> np.ndarray:
        case = self.case
        b = np.zeros(self.nS)
        if case.source is not None:
            b += assembly.assemble_load(case.source, self.S, t, self.forms.geometry)
        for fl in case.bc.fluxes:
            b += assembly.assemble_boundary_flux(fl.value, self.S, fl.side, t)
        if self.gravity is not None:
            b += self.gravity
        return b

    def _augment(self, blocks):
        """Append the rigid-motion multiplier rows/columns to a block matrix."""
        if self.rigid is None:
            return sps.bmat(blocks, format="csr")
        A = sps.bmat(blocks, format="csr")
        n_other = A.shape[1] - self.nV
        R = sps.hstack([self.rigid, sps.csr_matrix((3, n_other))]) if n_other else self.rigid
        return sps.bmat([[A, R.T], [R, None]], format="csr")


# ---------------------------------------------------------------------------
# Reformulated scheme
# ---------------------------------------------------------------------------


class Scheme(_Discretization):
    """The multiphysics scheme on one case with a fixed time step."""

    def __init__(self, case: Case, config: SchemeConfig, forms: FormCatalog | None = None):
        super().__init__(case, forms)
        self.config = config
        config.check_stability(case.mesh.cell_size)
        self._solver = None
        self._solver_flow = None
        self._nodal_div = None

    # initial data ------------------------------------------------------------
    def init_state(self) -> State:
        case, prm, mesh = self.case, self.case.params, self.case.mesh
        tau = interpolate(case.tau0, self.V, 0.0)
        p0 = interpolate(case.p0, self.S, 0.0)
        q0 = broken_divergence(tau, self.V, self.forms.geometry)
        if case.varpi_exact is not None:
            varpi = interpolate(case.varpi_exact, self.S, 0.0)
        else:
            varpi = prm.a0 * p0 + prm.b0 * nodal_average(q0, mesh)
        delta = interpolate(case.delta0, self.S, 0.0) if case.delta0 is not None else np.zeros(self.nS)
        rate = np.zeros_like(q0)
        return State(0, 0.0, tau, delta, varpi, tau.copy(), rate, varpi.copy(), p0[mesh.triangles], q0)

    # pressure data -------------------------------------------------------------
    def varpi_constraint(self, t: float, delta_star, rate_star) -> np.ndarray:
        """Values of ``varpi`` at pressure-Dirichlet nodes."""
        if len(self.p_nodes) == 0:
            return np.zeros(0)
        if self.case.varpi_exact is not None:
            x = self.S.node_coords[self.p_nodes]
            return np.asarray(self.case.varpi_exact(x, t), dtype=float).reshape(-1)
        return pressure_dirichlet_to_varpi(
            self.pressure_values(t),
            self.case.params,
            delta_star[self.p_nodes],
            nodal_average(rate_star, self.case.mesh)[self.p_nodes],
        )

    # linear systems ------------------------------------------------------------
    @property
    def implicit_pressure(self) -> bool:
        """Whether pressure data enter the coupled solve as boundary rows."""
        return (
            self.config.theta == 1
            and self.config.pressure_bc == "implicit"
            and self.case.varpi_exact is None
            and len(self.p_nodes) > 0
        )

    def _monolithic(self):
        if self._solver is None:
            f, prm, dt = self.forms, self.case.params, self.config.dt
            ls, c1, c2, c3 = prm.lambda_star, prm.chi1, prm.chi2, prm.chi3
            A = self._augment(
                [
                    [f.elasticity, -f.div.T, None],
                    [(1.0 + ls * c3 / dt) * f.div, c3 * f.mass, -c1 * f.mass],
                    [(ls * c1 / dt) * f.divgrad, c1 * f.diffusion, f.mass / dt + c2 * f.diffusion],
                ]
            )
            rows = self.nV + self.nS + self.p_nodes
            if self.implicit_pressure:
                # c1 delta_i + c2 varpi_i + ls c1 w_i = p_D at each boundary node
                if self._nodal_div is None:
                    self._nodal_div = nodal_divergence(self.V, f.geometry)
                k = len(self.p_nodes)
                eye = sps.identity(self.nS, format="csr")[self.p_nodes]
                R = sps.hstack(
                    [(ls * c1 / dt) * self._nodal_div[self.p_nodes], c1 * eye, c2 * eye, sps.csr_matrix((k, A.shape[1] - self.nV - 2 * self.nS))],
                    format="csr",
                )
                keep = np.ones(A.shape[0])
                keep[rows] = 0.0
                P = sps.csr_matrix((np.ones(k), (rows, np.arange(k))), shape=(A.shape[0], k))
                A = (sps.diags(keep) @ A + P @ R).tocsr()
                cons = self.tau_dofs
            else:
                cons = np.concatenate([self.tau_dofs, rows])
            self._solver = ConstrainedSolver(A, cons, self.config.solver_rtol)
        return self._solver

    def _stokes(self):
        if self._solver is None:
            f, prm, dt = self.forms, self.case.params, self.config.dt
            ls, c3 = prm.lambda_star, prm.chi3
            A = self._augment([[f.elasticity, -f.div.T], [(1.0 + ls * c3 / dt) * f.div, c3 * f.mass]])
            self._solver = ConstrainedSolver(A, self.tau_dofs, self.config.solver_rtol)
        return self._solver

    def _flow(self):
        if self._solver_flow is None:
            f, prm, dt = self.forms, self.case.params, self.config.dt
            self._solver_flow = ConstrainedSolver(f.mass / dt + prm.chi2 * f.diffusion, self.p_nodes, self.config.solver_rtol)
        return self._solver_flow

    def _extra(self):
        return 3 if self.rigid is not None else 0

    # steps -------------------------------------------------------------------
    def step(self, state: State) -> State:
        return self.step_theta1(state) if self.config.theta == 1 else self.step_theta0(state)

    def step_theta1(self, state: State) -> State:
        f, prm, dt = self.forms, self.case.params, self.config.dt
        ls, c1, c3 = prm.lambda_star, prm.chi1, prm.chi3
        t = state.t + dt
        nV, nS = self.nV, self.nS
        rhs = np.zeros(nV + 2 * nS + self._extra())
        rhs[:nV] = self.tau_load(t)
        rhs[nV : nV + nS] = (ls * c3 / dt) * (f.div @ state.tau)
        rhs[nV + nS : nV + 2 * nS] = f.mass @ state.varpi / dt + self.flow_load(t) + (ls * c1 / dt) * (f.divgrad @ state.tau)
        solver = self._monolithic()
        if self.implicit_pressure:
            rhs[nV + nS + self.p_nodes] = self.pressure_values(t) + (ls * c1 / dt) * (self._nodal_div @ state.tau)[self.p_nodes]
            values = self.tau_values(t)
        else:
            values = np.concatenate([self.tau_values(t), self.varpi_constraint(t, state.delta, state.rate)])
        x = solver.solve(rhs, values)
        tau, delta, varpi = x[:nV], x[nV : nV + nS], x[nV + nS : nV + 2 * nS]
        return self.update_pq(state, tau, delta, varpi, varpi)

    def step_theta0(self, state: State) -> State:
        f, prm, dt = self.forms, self.case.params, self.config.dt
        ls, c1, c3 = prm.lambda_star, prm.chi1, prm.chi3
        t = state.t + dt
        nV, nS = self.nV, self.nS
        rhs = np.zeros(nV + nS + self._extra())
        rhs[:nV] = self.tau_load(t)
        rhs[nV : nV + nS] = c1 * (f.mass @ state.varpi) + (ls * c3 / dt) * (f.div @ state.tau)
        x = self._stokes().solve(rhs, self.tau_values(t))
        tau, delta = x[:nV], x[nV : nV + nS]
        rate = self._rate(state.tau, tau)
        rhs_w = (
            f.mass @ state.varpi / dt
            + self.flow_load(t)
            - c1 * (f.diffusion @ delta)
            - (ls * c1 / dt) * (f.divgrad @ (tau - state.tau))
        )
        varpi = self._flow().solve(rhs_w, self.varpi_constraint(t, delta, rate))
        return self.update_pq(state, tau, delta, varpi, state.varpi, rate)

    def _rate(self, tau_old, tau_new) -> np.ndarray:
        return broken_divergence(tau_new - tau_old, self.V, self.forms.geometry) / self.config.dt

    def update_pq(self, state: State, tau, delta, varpi, varpi_stage, rate=None) -> State:
        """Advance ``state`` with the solved fields and rebuild the broken ``p``, ``q``."""
        if rate is None:
            rate = self._rate(state.tau, tau)
        p, q = reconstruct(self.case.params, delta, varpi_stage, rate, self.case.mesh)
        return State(state.n + 1, state.t + self.config.dt, tau, delta, varpi, state.tau, rate, varpi_stage, p, q)

    def run(self, callback=None) -> list:
        states = [self.init_state()]
        for _ in range(self.config.n_steps):
            states.append(self.step(states[-1]))
            if callback is not None:
                callback(states[-1])
        return states


def pressure_dirichlet_to_varpi(p_D, params, delta_star, rate_star) -> np.ndarray:
    """``varpi`` values making the reconstructed pressure equal ``p_D``."""
    if params.chi2 == 0:
        raise SchemeError("pressure data cannot be carried by varpi when lam = 0")
    return (np.asarray(p_D) - params.chi1 * np.asarray(delta_star) - params.lambda_star * params.chi1 * np.asarray(rate_star)) / params.chi2


# ---------------------------------------------------------------------------
# Original two-field scheme
# ---------------------------------------------------------------------------


class OriginalScheme(_Discretization):
    """Backward Euler for the displacement-pressure form with P2-P1 elements."""

    def __init__(self, case: Case, config: SchemeConfig, forms: FormCatalog | None = None):
        super().__init__(case, forms)
        self.config = config
        self._solver = None

    def init_state(self) -> OriginalState:
        tau = interpolate(self.case.tau0, self.V, 0.0)
        p = interpolate(self.case.p0, self.S, 0.0)
        return OriginalState(0, 0.0, tau, p, p[self.case.mesh.triangles])

    def _matrix(self):
        if self._solver is None:
            f, prm, dt = self.forms, self.case.params, self.config.dt
            A = self._augment(
                [
                    [(prm.lambda_star / dt + prm.lam) * f.divdiv + f.elasticity, -prm.b0 * f.div.T],
                    [(prm.b0 / dt) * f.div, (prm.a0 / dt) * f.mass + f.diffusion],
                ]
            )
            self._solver = ConstrainedSolver(A, np.concatenate([self.tau_dofs, self.nV + self.p_nodes]), self.config.solver_rtol)
        return self._solver

    def step(self, state: OriginalState) -> OriginalState:
        f, prm, dt = self.forms, self.case.params, self.config.dt
        t = state.t + dt
        nV = self.nV
        rhs = np.zeros(nV + self.nS + (3 if self.rigid is not None else 0))
        rhs[:nV] = self.tau_load(t) + (prm.lambda_star / dt) * (f.divdiv @ state.tau)
        rhs[nV : nV + self.nS] = self.flow_load(t) + (prm.a0 / dt) * (f.mass @ state.p) + (prm.b0 / dt) * (f.div @ state.tau)
        values = np.concatenate([self.tau_values(t), self.pressure_values(t)])
        x = self._matrix().solve(rhs, values)
        tau, p = x[:nV], x[nV : nV + self.nS]
        return OriginalState(state.n + 1, t, tau, p, p[self.case.mesh.triangles])

    def run(self, callback=None) -> list:
        states = [self.init_state()]
        for _ in range(self.config.n_steps):
            states.append(self.step(states[-1]))
            if callback is not None:
                callback(states[-1])
        return states


def run(case: Case, config: SchemeConfig, model: str = "reformulated", forms=None) -> list:
    """Trajectory ``[state_0, ..., state_N]`` of the chosen model."""
    if model == "reformulated":
        return Scheme(case, config, forms).run()
    if model == "original":
        return OriginalScheme(case, config, forms).run()
    raise SchemeError(f"unknown model {model!r}")


__all__ = [
    "BCSpec",
    "Case",
    "DisplacementBC",
    "OriginalScheme",
    "OriginalState",
    "Scheme",
    "SchemeConfig",
    "SchemeError",
    "SideData",
    "SolverError",
    "State",
    "nodal_average",
    "pressure_dirichlet_to_varpi",
    "reconstruct",
    "run",
]
