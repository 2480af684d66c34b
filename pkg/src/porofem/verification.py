"""Manufactured solutions, error norms and the discrete conservation checks."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .assembly import assemble_div, assemble_mass
from .fem import P1, Geometry, build_dofmap, eval_basis, field_at_quadrature, quadrature
from .linalg import smallest_generalized_eig
from .mesh import Mesh, Side, locate, outward_normal, unit_square
from .params import MANUFACTURED_PARAMS, CheckedParams, PhysicalParams, validate
from .stepper import BCSpec, Case, DisplacementBC, Scheme, SchemeConfig, SideData, State

ERROR_DEGREE = 6


# ---------------------------------------------------------------------------
# Manufactured solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact fields and the data they generate.

    All callables take points ``x`` of shape ``(n, 2)`` and a time ``t``.
    ``grad_tau`` returns ``(n, 2, 2)`` with ``[k, i, j] = d tau_i / d x_j``.
    """

    name: str
    params: CheckedParams
    tau: Callable
    grad_tau: Callable
    tau_t: Callable
    p: Callable
    grad_p: Callable
    p_t: Callable
    q_t: Callable
    q_tt: Callable
    F: Callable
    phi: Callable

    def q(self, x, t):
        g = self.grad_tau(x, t)
        return g[:, 0, 0] + g[:, 1, 1]

    def varpi(self, x, t):
        return self.params.a0 * self.p(x, t) + self.params.b0 * self.q(x, t)

    def delta(self, x, t):
        prm = self.params
        return prm.b0 * self.p(x, t) - prm.lam * self.q(x, t) - prm.lambda_star * self.q_t(x, t)

    def traction(self, normal):
        """Total traction ``lambda* q_t n + sigma n - b0 p n`` on a side with ``normal``."""
        n = np.asarray(normal, dtype=float)
        prm = self.params

        def F1(x, t):
            g = self.grad_tau(x, t)
            eps = 0.5 * (g + np.swapaxes(g, 1, 2))
            div = g[:, 0, 0] + g[:, 1, 1]
            sig_n = prm.gamma * eps @ n + (prm.lam * div)[:, None] * n
            scalar = prm.lambda_star * self.q_t(x, t) - prm.b0 * self.p(x, t)
            return sig_n + scalar[:, None] * n

        return F1

    def case(self, mesh: Mesh) -> Case:
        """Both tests prescribe ``tau_1`` on the left/right sides, ``tau_2`` on
        the bottom/top, the pressure on the whole boundary and the traction on
        the remaining components."""

        def comp(i):
            return lambda x, t: self.tau(x, t)[:, i]

        disp = (
            DisplacementBC(Side.RIGHT, 0, comp(0)),
            DisplacementBC(Side.LEFT, 0, comp(0)),
            DisplacementBC(Side.BOTTOM, 1, comp(1)),
            DisplacementBC(Side.TOP, 1, comp(1)),
        )
        tractions = tuple(SideData(s, self.traction(outward_normal(s))) for s in Side)
        pressure = tuple(SideData(s, self.p) for s in Side)
        return Case(
            name=self.name,
            mesh=mesh,
            params=self.params,
            bc=BCSpec(displacement=disp, tractions=tractions, pressure=pressure),
            body_force=self.F,
            source=self.phi,
            tau0=lambda x, t: self.tau(x, 0.0),
            p0=lambda x, t: self.p(x, 0.0),
            delta0=lambda x, t: self.delta(x, 0.0),
            varpi_exact=self.varpi,
        )


def _stack(a, b):
    return np.stack([a, b], axis=-1)


def test1(params: PhysicalParams = MANUFACTURED_PARAMS) -> ManufacturedCase:
    """Displacement ``t (sin pi x, sin pi y)``, pressure ``t sin(pi x + pi y)``."""
    prm = validate(params)
    pi = math.pi
    ls, lam, gam, b0, a0 = prm.lambda_star, prm.lam, prm.gamma, prm.b0, prm.a0
    kappa = prm.K[0, 0] / prm.theta_f
    if not np.allclose(prm.K, prm.K[0, 0] * np.eye(2)):
        raise ValueError("manufactured sources assume isotropic K")

    def tau(x, t):
        return t * _stack(np.sin(pi * x[:, 0]), np.sin(pi * x[:, 1]))

    def grad_tau(x, t):
        g = np.zeros((len(x), 2, 2))
        g[:, 0, 0] = t * pi * np.cos(pi * x[:, 0])
        g[:, 1, 1] = t * pi * np.cos(pi * x[:, 1])
        return g

    def q_t(x, t):
        return pi * (np.cos(pi * x[:, 0]) + np.cos(pi * x[:, 1])) + 0 * t

    def p(x, t):
        return t * np.sin(pi * (x[:, 0] + x[:, 1]))

    def grad_p(x, t):
        c = t * pi * np.cos(pi * (x[:, 0] + x[:, 1]))
        return _stack(c, c)

    def F(x, t):
        s = _stack(np.sin(pi * x[:, 0]), np.sin(pi * x[:, 1]))
        c = b0 * t * pi * np.cos(pi * (x[:, 0] + x[:, 1]))
        return ls * pi**2 * s + (lam + gam) * pi**2 * t * s + _stack(c, c)

    def phi(x, t):
        s = np.sin(pi * (x[:, 0] + x[:, 1]))
        return a0 * s + 2 * kappa * t * pi**2 * s + b0 * pi * (np.cos(pi * x[:, 0]) + np.cos(pi * x[:, 1]))

    return ManufacturedCase(
        name="test1",
        params=prm,
        tau=tau,
        grad_tau=grad_tau,
        tau_t=lambda x, t: tau(x, 1.0),
        p=p,
        grad_p=grad_p,
        p_t=lambda x, t: p(x, 1.0),
        q_t=q_t,
        q_tt=lambda x, t: np.zeros(len(x)),
        F=F,
        phi=phi,
    )


def test2(params: PhysicalParams = MANUFACTURED_PARAMS) -> ManufacturedCase:
    """Displacement ``e^t (sin x, sin y)``, pressure ``t sin(pi x) sin(pi y)``."""
    prm = validate(params)
    pi = math.pi
    ls, lam, gam, b0, a0 = prm.lambda_star, prm.lam, prm.gamma, prm.b0, prm.a0
    kappa = prm.K[0, 0] / prm.theta_f
    if not np.allclose(prm.K, prm.K[0, 0] * np.eye(2)):
        raise ValueError("manufactured sources assume isotropic K")

    def tau(x, t):
        return math.exp(t) * _stack(np.sin(x[:, 0]), np.sin(x[:, 1]))

    def grad_tau(x, t):
        g = np.zeros((len(x), 2, 2))
        g[:, 0, 0] = math.exp(t) * np.cos(x[:, 0])
        g[:, 1, 1] = math.exp(t) * np.cos(x[:, 1])
        return g

    def q_t(x, t):
        return math.exp(t) * (np.cos(x[:, 0]) + np.cos(x[:, 1]))

    def p(x, t):
        return t * np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def grad_p(x, t):
        return t * pi * _stack(np.cos(pi * x[:, 0]) * np.sin(pi * x[:, 1]), np.sin(pi * x[:, 0]) * np.cos(pi * x[:, 1]))

    def F(x, t):
        s = _stack(np.sin(x[:, 0]), np.sin(x[:, 1]))
        return (ls + lam + gam) * math.exp(t) * s + b0 * grad_p(x, t)

    def phi(x, t):
        s = np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])
        return a0 * s + 2 * kappa * pi**2 * t * s + b0 * math.exp(t) * (np.cos(x[:, 0]) + np.cos(x[:, 1]))

    return ManufacturedCase(
        name="test2",
        params=prm,
        tau=tau,
        grad_tau=grad_tau,
        tau_t=tau,
        p=p,
        grad_p=grad_p,
        p_t=lambda x, t: p(x, 1.0),
        q_t=q_t,
        q_tt=q_t,
        F=F,
        phi=phi,
    )


MANUFACTURED = {"test1": test1, "test2": test2}


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def _p1_tables(mesh: Mesh, quad, geometry: Geometry):
    vals, rgrads = eval_basis(P1, quad.points)
    grads = geometry.grads(rgrads)[:, 0]  # (nt, 3, 2), constant
    w = np.abs(geometry.det)[:, None] * quad.weights[None, :]
    return vals, grads, w


def broken_at_quadrature(broken: np.ndarray, mesh: Mesh, quad, geometry: Geometry | None = None):
    """Values ``(nt, nq)`` and gradients ``(nt, 2)`` of an elementwise linear field."""
    geometry = geometry or Geometry.of(mesh)
    vals, grads, _ = _p1_tables(mesh, quad, geometry)
    return broken @ vals.T, np.einsum("tv,tvi->ti", broken, grads)


def error_norms(state: State, exact: ManufacturedCase, scheme: Scheme) -> dict:
    """L2 and full H1 errors at ``state.t``; the pressure is the broken reconstruction."""
    t = state.t
    mesh, g = scheme.case.mesh, scheme.forms.geometry
    quad = quadrature(ERROR_DEGREE)
    x = g.map(quad.points)
    nt, nq = x.shape[:2]
    xf = x.reshape(-1, 2)
    w = np.abs(g.det)[:, None] * quad.weights[None, :]

    def integrate(v):
        return float(np.sum(w * v))

    tv, tg = field_at_quadrature(state.tau, scheme.V, quad, g)
    e = tv - exact.tau(xf, t).reshape(nt, nq, 2)
    eg = tg - exact.grad_tau(xf, t).reshape(nt, nq, 2, 2)
    tau_l2 = integrate((e**2).sum(-1))
    tau_semi = integrate((eg**2).sum((-1, -2)))

    pv, pg = broken_at_quadrature(state.p_broken, mesh, quad, g)
    ep = pv - exact.p(xf, t).reshape(nt, nq)
    epg = pg[:, None, :] - exact.grad_p(xf, t).reshape(nt, nq, 2)
    p_l2 = integrate(ep**2)
    p_semi = integrate((epg**2).sum(-1))

    dv, _ = field_at_quadrature(state.delta, scheme.S, quad, g)
    vv, _ = field_at_quadrature(state.varpi, scheme.S, quad, g)
    d_l2 = integrate((dv - exact.delta(xf, t).reshape(nt, nq)) ** 2)
    v_l2 = integrate((vv - exact.varpi(xf, t).reshape(nt, nq)) ** 2)
    return {
        "tau_L2": math.sqrt(tau_l2),
        "tau_H1": math.sqrt(tau_l2 + tau_semi),
        "p_L2": math.sqrt(p_l2),
        "p_H1": math.sqrt(p_l2 + p_semi),
        "delta_L2": math.sqrt(d_l2),
        "varpi_L2": math.sqrt(v_l2),
    }


def l2_difference(a: State, b: State, scheme: Scheme) -> dict:
    """L2 norms of ``a - b`` for tau (P2) and the broken pressure on a shared mesh."""
    quad = quadrature(ERROR_DEGREE)
    g = scheme.forms.geometry
    w = np.abs(g.det)[:, None] * quad.weights[None, :]
    tv, _ = field_at_quadrature(a.tau - b.tau, scheme.V, quad, g)
    pv, _ = broken_at_quadrature(a.p_broken - b.p_broken, scheme.case.mesh, quad, g)
    return {
        "tau": math.sqrt(float(np.sum(w * (tv**2).sum(-1)))),
        "p": math.sqrt(float(np.sum(w * pv**2))),
    }


# ---------------------------------------------------------------------------
# Convergence studies
# ---------------------------------------------------------------------------


def rates(errors) -> list:
    """``log2(e_coarse / e_fine)`` between consecutive halvings."""
    e = list(errors)
    return [math.log2(e[i] / e[i + 1]) if e[i + 1] > 0 else math.inf for i in range(len(e) - 1)]


@dataclass
class ConvergenceReport:
    """Rows of a convergence table; ``key`` is the column varied (``h`` or ``dt``)."""

    key: str
    values: list
    columns: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)

    def rate(self, name) -> list:
        return rates(self.columns[name])

    def rows(self, names=None):
        """Table rows ``(value, e1, CR1, e2, CR2, ...)`` with blank first rates."""
        names = names or list(self.columns)
        out = []
        for i, v in enumerate(self.values):
            row = [v]
            for n in names:
                row.append(self.columns[n][i])
                row.append(None if i == 0 else self.rate(n)[i - 1])
            out.append(row)
        return out


def cells_for(h: float) -> int:
    n = round(1.0 / h)
    if abs(n * h - 1.0) > 1e-9:
        raise ValueError(f"h={h} does not divide the unit square")
    return int(n)


def ordered_map(fn, items, workers: int):
    """``map`` that optionally fans out over threads while keeping input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def spatial_convergence(exact: ManufacturedCase, h_list, config: SchemeConfig, workers: int = 1) -> ConvergenceReport:
    report = ConvergenceReport("h", list(h_list))

    def one(h):
        scheme = Scheme(exact.case(unit_square(cells_for(h))), config)
        return error_norms(scheme.run()[-1], exact, scheme)

    for errs in ordered_map(one, h_list, workers):
        for k, v in errs.items():
            report.columns.setdefault(k, []).append(v)
    return report


def temporal_ratio(case: Case, dt_list, T: float = 1.0, theta: int = 1, workers: int = 1) -> ConvergenceReport:
    """Successive-solution differences at ``T`` and their ratios on one mesh.

    ``dt_list`` is a halving chain; the report stores, for consecutive pairs,
    ``||v^{dt} - v^{dt/2}||`` and the ratios of consecutive differences.
    Ratios with a denominator below 1e-15 are reported as ``nan`` and flagged
    temporally exact.
    """
    dt_list = list(dt_list)
    forms = Scheme(case, SchemeConfig(theta=1, dt=dt_list[0], T=T)).forms

    def one(dt):
        return Scheme(case, SchemeConfig(theta=theta, dt=dt, T=T), forms).run()[-1]

    finals = ordered_map(one, dt_list, workers)
    scheme = Scheme(case, SchemeConfig(theta=1, dt=dt_list[0], T=T), forms)
    report = ConvergenceReport("dt", dt_list[:-1])
    for a, b in zip(finals[:-1], finals[1:]):
        for k, v in l2_difference(a, b, scheme).items():
            report.columns.setdefault(k, []).append(v)
    for k, diffs in report.columns.items():
        ratios, exact = [], []
        for i in range(len(diffs) - 1):
            if diffs[i + 1] < 1e-15:
                ratios.append(math.nan)
                exact.append(True)
            else:
                ratios.append(diffs[i] / diffs[i + 1])
                exact.append(False)
        report.derived[k] = {"ratios": ratios, "temporally_exact": exact}
    return report


# ---------------------------------------------------------------------------
# Conservation
# ---------------------------------------------------------------------------


def neumann_source(x, t):
    return 1.0 + np.cos(np.pi * x[:, 0]) * (1.0 + x[:, 1])


def pure_neumann_case(mesh: Mesh, params: PhysicalParams = MANUFACTURED_PARAMS, source=None) -> Case:
    """Traction-free, no-flux problem driven by a time-independent fluid source.

    Rigid motions are removed by multipliers. This is the configuration in
    which the mass balance and the energy identity are checked.
    """
    return Case.make("neumann", mesh, params, source=source or neumann_source, rigid_motions=True)



def mass_balance(trajectory, scheme: Scheme) -> np.ndarray:
    """``(varpi^n, 1) - (varpi^0, 1) - [(phi, 1) + <phi1, 1>] t_n`` for time-independent sources."""
    one = np.ones(scheme.nS)
    M = scheme.forms.mass
    supply = scheme.flow_load(trajectory[0].t)
    if scheme.gravity is not None:
        supply = supply - scheme.gravity
    rate = float(one @ supply)
    w0 = float(one @ (M @ trajectory[0].varpi))
    return np.array([float(one @ (M @ s.varpi)) - w0 - rate * (s.t - trajectory[0].t) for s in trajectory])


def delta_mean_prediction(trajectory, scheme: Scheme) -> np.ndarray:
    """Mean-value recursion for ``(delta^n, 1)`` in a pure-traction configuration without loads.

    Returns predicted ``(delta^n, 1)`` for ``n >= 1`` given ``(delta^0, 1)``
    and the computed ``(varpi, 1)`` history.
    """
    prm, dt = scheme.case.params, scheme.config.dt
    theta = scheme.config.theta
    d = 2.0
    M = scheme.forms.mass
    one = np.ones(scheme.nS)
    mean_varpi = [float(one @ (M @ s.varpi)) for s in trajectory]
    a = d * prm.lambda_star * prm.chi3 / dt
    denom = a + prm.chi3 * prm.gamma + d
    pred = [float(one @ (M @ trajectory[0].delta))]
    for n in range(1, len(trajectory)):
        prev = float(one @ (M @ trajectory[n - 1].delta))
        c_varpi = mean_varpi[n - 1 + theta]
        pred.append((a * prev + prm.chi1 * prm.gamma * c_varpi) / denom)
    return np.array(pred)


# ---------------------------------------------------------------------------
# Energy ledger
# ---------------------------------------------------------------------------


class _Integrator:
    """Quadrature helpers shared by the energy terms of one scheme."""

    def __init__(self, scheme: Scheme):
        self.scheme = scheme
        g = scheme.forms.geometry
        self.geometry = g
        self.quad = quadrature(ERROR_DEGREE)
        self.w = np.abs(g.det)[:, None] * self.quad.weights[None, :]
        self.area = 0.5 * np.abs(g.det)
        self.p1_vals, rg = eval_basis(P1, self.quad.points)
        self.p1_grads = g.grads(rg)[:, 0]  # (nt, 3, 2)
        self.x = g.map(self.quad.points)
        prm = scheme.case.params
        self.Kt = np.asarray(prm.K, dtype=float) / prm.theta_f
        self.Kg = self.Kt @ np.asarray(prm.rho_f_g, dtype=float)

    def strain(self, tau):
        _, grads = field_at_quadrature(tau, self.scheme.V, self.quad, self.geometry)
        return 0.5 * (grads + np.swapaxes(grads, -1, -2))

    def norm2_strain(self, tau) -> float:
        e = self.strain(tau)
        return float(np.sum(self.w * (e**2).sum((-1, -2))))

    def broken_vals(self, broken):
        return broken @ self.p1_vals.T

    def broken_grad(self, broken):
        return np.einsum("tv,tvi->ti", broken, self.p1_grads)

    def node_grad(self, coeffs):
        return self.broken_grad(coeffs[self.scheme.case.mesh.triangles])

    def norm2_broken(self, broken) -> float:
        return float(np.sum(self.w * self.broken_vals(broken) ** 2))

    def flux(self, grad_a, grad_b) -> float:
        """``(K/theta_f grad a, grad b)`` for elementwise-constant gradients."""
        return float(np.sum(self.area * np.einsum("ti,ij,tj->t", grad_a, self.Kt, grad_b)))

    def gravity(self, grad_b) -> float:
        return float(np.sum(self.area * (grad_b @ self.Kg)))

    def source(self, broken, t) -> float:
        case = self.scheme.case
        total = 0.0
        if case.source is not None:
            fx = np.asarray(case.source(self.x.reshape(-1, 2), t), dtype=float)
            fx = np.broadcast_to(fx, (self.x.shape[0] * self.x.shape[1],)).reshape(self.x.shape[:2])
            total += float(np.sum(self.w * fx * self.broken_vals(broken)))
        for fl in case.bc.fluxes:
            total += self._boundary(fl.value, fl.side, broken, t)
        return total

    def _boundary(self, phi1, side, broken, t) -> float:
        from .assembly import _facet_tables

        mesh = self.scheme.case.mesh
        tris = mesh.boundary_facets(side).triangles
        _, vals, x, w, _ = _facet_tables(self.scheme.S, side)
        nf, ns = x.shape[:2]
        px = np.broadcast_to(np.asarray(phi1(x.reshape(-1, 2), t), dtype=float), (nf * ns,)).reshape(nf, ns)
        pv = np.einsum("fsb,fb->fs", vals, broken[tris])
        return float(np.sum(w * px * pv))

    def work(self, tau, t) -> float:
        """``(F, tau) + <F1, tau>`` with the same quadrature as the load vectors."""
        return float(self.scheme.tau_load(t) @ tau)


@dataclass
class EnergyLedger:
    """Per-step energy terms; ``residual[n] = J[n] + S[n] - J[0]``."""

    J: np.ndarray
    S: np.ndarray
    residual: np.ndarray
    S_hat: np.ndarray | None = None
    residual_hat: np.ndarray | None = None


def energy_ledger(trajectory, scheme: Scheme) -> EnergyLedger:
    """Evaluate the discrete energy ``J`` and dissipation ``S`` along a trajectory.

    Difference quotients before the first step use ``tau^{-1} = tau^0`` and
    ``varpi^{-1} = varpi^0``, so they vanish at ``n = 0``. The identity
    ``J^{l+1} + S^{l+1} = J^0`` presumes time-independent loads and initial
    data that satisfy the discrete equations.
    """
    prm, dt, theta = scheme.case.params, scheme.config.dt, scheme.config.theta
    ls, gam, c1, c2, c3 = prm.lambda_star, prm.gamma, prm.chi1, prm.chi2, prm.chi3
    M = scheme.forms.mass
    q = _Integrator(scheme)

    def mnorm(v):
        return float(v @ (M @ v))

    def dt_strain(a, b):
        return q.norm2_strain((a.tau - b.tau) / dt)

    def J(s, prev):
        shifted = ls * s.rate + s.delta[scheme.case.mesh.triangles]
        return 0.5 * (
            gam * q.norm2_strain(s.tau)
            + c2 * mnorm(s.varpi_stage)
            + c3 * q.norm2_broken(shifted)
            + 0.5 * gam * ls * c3 * dt * dt_strain(s, prev)
            - 2.0 * q.work(s.tau, s.t)
        )

    n = len(trajectory)
    Jv = np.zeros(n)
    Sv = np.zeros(n)
    Sh = np.zeros(n)
    Jv[0] = J(trajectory[0], trajectory[0])
    d2_prev = np.zeros_like(trajectory[0].tau)
    for k in range(1, n):
        s, prev = trajectory[k], trajectory[k - 1]
        d_tau = (s.tau - prev.tau) / dt
        d2_tau = (d_tau - d2_prev) / dt
        d2_prev = d_tau
        d2_rate = (s.rate - prev.rate) / dt
        d_delta = (s.delta - prev.delta) / dt
        d_varpi = (s.varpi_stage - prev.varpi_stage) / dt
        gp = q.broken_grad(s.p_broken)
        common = (
            ls * q.norm2_broken(s.rate)
            + q.flux(gp, gp)
            - q.gravity(gp)
            + 0.5 * c2 * dt * mnorm(d_varpi)
            + 0.5 * c3 * dt * mnorm(d_delta)
            - q.source(s.p_broken, s.t)
        )
        e1 = q.norm2_strain(d_tau)
        e2 = q.norm2_strain(d2_tau)
        r2 = q.norm2_broken(ls * d2_rate)
        full = common + 0.5 * gam * dt * e1 + 0.5 * c3 * dt * r2 + 0.5 * gam * ls * c3 * dt**2 * e2
        if theta == 0:
            full -= c1 * dt * q.flux(q.node_grad(d_delta), gp)
            full -= c1 * ls * dt * q.flux(q.broken_grad(d2_rate), gp)
            Sh[k] = Sh[k - 1] + dt * (common + 0.25 * gam * dt * e1 + 0.25 * c3 * dt * r2 + 0.5 * gam * ls * c3 * dt**2 * e2)
        Sv[k] = Sv[k - 1] + dt * full
        Jv[k] = J(s, prev)
    res = Jv + Sv - Jv[0]
    if theta == 0:
        return EnergyLedger(Jv, Sv, res, Sh, Jv + Sh - Jv[0])
    return EnergyLedger(Jv, Sv, res)


# ---------------------------------------------------------------------------
# Inf-sup constant
# ---------------------------------------------------------------------------


def infsup_estimate(mesh: Mesh, velocity: str = "free") -> float:
    """Discrete inf-sup constant of the P2-P1 pair on ``mesh``.

    ``velocity='free'`` uses the whole P2 space (no boundary conditions),
    ``'clamped'`` the subspace vanishing on the boundary. Pressures are
    restricted to mean-zero functions and the velocity norm is the full H1 norm.
    """
    V = build_dofmap(mesh, "P2", 2)
    S = build_dofmap(mesh, "P1")
    g = Geometry.of(mesh)
    Av = (_vector_stiffness(V, g) + _vector_mass(V, g)).tocsc()
    B = assemble_div(V, S, g)
    Mp = assemble_mass(S, g)
    if velocity == "clamped":
        bnd = np.unique(np.concatenate([V.boundary_dofs(s, c) for s in Side for c in (0, 1)]))
        keep = np.setdiff1d(np.arange(V.n_dofs), bnd)
        Av = Av[keep][:, keep]
        B = B[:, keep]
    elif velocity != "free":
        raise ValueError(f"unknown velocity space {velocity!r}")
    X = spla.splu(Av).solve(B.T.toarray())
    schur = B @ X
    # mean-zero pressures: (p, 1) = 0
    c = Mp @ np.ones(S.n_dofs)
    lam, _ = smallest_generalized_eig(schur, Mp, constraint=c)
    return math.sqrt(max(lam, 0.0))


def _vector_mass(V, g):
    S = build_dofmap(V.mesh, V.elem, 1)
    Ms = assemble_mass(S, g)
    return _interleave(Ms)


def _vector_stiffness(V, g):
    from .assembly import assemble_diffusion

    S = build_dofmap(V.mesh, V.elem, 1)
    return _interleave(assemble_diffusion(S, 1.0, 1.0, g))


def _interleave(scalar):
    """Block-diagonal copy of a scalar operator in the interleaved vector numbering."""
    return sps.kron(scalar, sps.eye(2), format="csr")


# ---------------------------------------------------------------------------
# Pressure oscillations
# ---------------------------------------------------------------------------


def sample_line(broken: np.ndarray, mesh: Mesh, start, end, samples: int = 201) -> tuple:
    """Points along a segment and the broken field evaluated there."""
    s = np.linspace(0.0, 1.0, samples)
    a, b = np.asarray(start, float), np.asarray(end, float)
    pts = a + s[:, None] * (b - a)
    vals = np.empty(samples)
    for k, x in enumerate(pts):
        tri, bary = locate(mesh, x)
        vals[k] = bary @ broken[tri]
    return pts, vals


def oscillation_index(values) -> dict:
    v = np.asarray(values, dtype=float)
    tv = float(np.abs(np.diff(v)).sum())
    rng = float(v.max() - v.min()) if len(v) else 0.0
    index = 0.0 if rng < 1e-14 else tv / rng
    return {"TV": tv, "R": rng, "index": index}


def oscillation_metric(state, mesh: Mesh, start, end, samples: int = 201) -> dict:
    """Total variation, range and their ratio of the pressure along a segment."""
    _, vals = sample_line(state.p_broken, mesh, start, end, samples)
    out = oscillation_index(vals)
    out["values"] = vals
    return out


__all__ = [
    "ConvergenceReport",
    "EnergyLedger",
    "MANUFACTURED",
    "ManufacturedCase",
    "broken_at_quadrature",
    "cells_for",
    "delta_mean_prediction",
    "energy_ledger",
    "error_norms",
    "infsup_estimate",
    "l2_difference",
    "mass_balance",
    "oscillation_index",
    "neumann_source",
    "oscillation_metric",
    "ordered_map",
    "pure_neumann_case",
    "rates",
    "sample_line",
    "spatial_convergence",
    "temporal_ratio",
    "test1",
    "test2",
]
