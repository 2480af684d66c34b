"""Strip-load benchmarks and the original-versus-reformulated comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import Side, build_rect
from .params import FOOTING_PARAMS, LOCKING_PARAMS, PhysicalParams, validate
from .stepper import (
    BCSpec,
    Case,
    DisplacementBC,
    OriginalScheme,
    Scheme,
    SchemeConfig,
    SideData,
)
from .verification import oscillation_metric


@dataclass(frozen=True)
class BenchmarkCase:
    """A problem without exact solution plus where to inspect its pressure.

    ``lines`` maps a label to a segment ``(start, end)``.
    """

    name: str
    domain: tuple
    params: PhysicalParams
    T: float
    dt: float
    cells: tuple
    lines: dict = field(default_factory=dict)

    def mesh(self):
        return build_rect(self.domain, *self.cells)

    def case(self, mesh=None) -> Case:
        return BUILDERS[self.name](self, mesh or self.mesh())

    def config(self, theta: int = 1) -> SchemeConfig:
        return SchemeConfig(theta=theta, dt=self.dt, T=self.T)


def _zero(x, t=0.0):
    return np.zeros(len(x))


def _drained(sides=tuple(Side)):
    return tuple(SideData(s, _zero) for s in sides)


# --------------------------------------------------------------------------
# strip load on the unit square
# --------------------------------------------------------------------------

STRIP = (0.2, 0.8)


def in_strip(x):
    return (x[:, 0] >= STRIP[0]) & (x[:, 0] < STRIP[1])


def _locking_case(bench: BenchmarkCase, mesh) -> Case:
    prm = validate(bench.params)
    b0 = prm.b0

    def load(x, t):
        out = np.zeros((len(x), 2))
        out[:, 1] = np.where(in_strip(x), b0 * math.sin(t), 0.0)
        return out

    bc = BCSpec(
        displacement=(
            DisplacementBC(Side.LEFT, 0, _zero),
            DisplacementBC(Side.RIGHT, 0, _zero),
            DisplacementBC(Side.BOTTOM, 1, _zero),
            DisplacementBC(Side.TOP, 1, _zero, where=lambda x: ~in_strip(x)),
        ),
        tractions=(SideData(Side.TOP, load),),
        pressure=_drained(),
    )
    return Case(name=bench.name, mesh=mesh, params=prm, bc=bc)


def build_locking_case(n: int = 16, dt: float = 1 / 100, params: PhysicalParams = LOCKING_PARAMS) -> BenchmarkCase:
    """Unit square with a sinusoidal strip load on ``0.2 <= x < 0.8`` of the top side.

    The problem is symmetric about ``x = 0.5``, so the pressure is inspected
    on the right half of the mid-height line.
    """
    return BenchmarkCase(
        name="locking",
        domain=(0.0, 1.0, 0.0, 1.0),
        params=params,
        T=1.0,
        dt=dt,
        cells=(n, n),
        lines={"mid-height": ((0.5, 0.5), (1.0, 0.5)), "mid-height-full": ((0.0, 0.5), (1.0, 0.5))},
    )


# --------------------------------------------------------------------------
# footing
# --------------------------------------------------------------------------

FOOTING_LOAD = 1e4
FOOTING_HALF_WIDTH = 20.0


def _footing_case(bench: BenchmarkCase, mesh) -> Case:
    prm = validate(bench.params)

    def load(x, t):
        out = np.zeros((len(x), 2))
        out[:, 1] = np.where(np.abs(x[:, 0]) <= FOOTING_HALF_WIDTH, -FOOTING_LOAD, 0.0)
        return out

    clamped = (Side.LEFT, Side.RIGHT, Side.BOTTOM)
    bc = BCSpec(
        displacement=tuple(DisplacementBC(s, c, _zero) for s in clamped for c in (0, 1)),
        tractions=(SideData(Side.TOP, load),),
        pressure=_drained(),
    )
    return Case(name=bench.name, mesh=mesh, params=prm, bc=bc)


def build_footing_case(n: int = 20, steps: int = 20, params: PhysicalParams = FOOTING_PARAMS) -> BenchmarkCase:
    """100 m block of soil under a 40 m strip footing, drained on every side.

    The pressure is inspected on the half line ``y = 50, 0 <= x <= 50``.
    """
    T = 0.01
    return BenchmarkCase(
        name="footing",
        domain=(-50.0, 50.0, 0.0, 100.0),
        params=params,
        T=T,
        dt=T / steps,
        cells=(n, n),
        lines={"mid-depth": ((0.0, 50.0), (50.0, 50.0)), "mid-depth-full": ((-50.0, 50.0), (50.0, 50.0))},
    )


BUILDERS = {"locking": _locking_case, "footing": _footing_case}


def surface_settlement(state, scheme) -> float:
    """Vertical displacement at the top-centre node (negative means downward)."""
    x0, x1, _, y1 = scheme.case.mesh.bounds
    coords = scheme.V.node_coords
    target = np.array([0.5 * (x0 + x1), y1])
    node = int(np.argmin(np.hypot(*(coords - target).T)))
    return float(state.tau[2 * node + 1])


@dataclass
class Comparison:
    bench: BenchmarkCase
    reformulated: dict
    original: dict
    states: dict
    schemes: dict

    def ratio(self, line: str) -> float:
        r = self.reformulated[line]["index"]
        return math.inf if r == 0 else self.original[line]["index"] / r


def compare_formulations(bench: BenchmarkCase, theta: int = 1, samples: int = 201) -> Comparison:
    """Run both formulations on one mesh and time step and measure pressure oscillations."""
    mesh = bench.mesh()
    case = bench.case(mesh)
    config = bench.config(theta)
    ref = Scheme(case, config)
    orig = OriginalScheme(case, config, ref.forms)
    s_ref = ref.run()[-1]
    s_orig = orig.run()[-1]
    out_ref, out_orig = {}, {}
    for label, (a, b) in bench.lines.items():
        out_ref[label] = oscillation_metric(s_ref, mesh, a, b, samples)
        out_orig[label] = oscillation_metric(s_orig, mesh, a, b, samples)
    return Comparison(bench, out_ref, out_orig, {"reformulated": s_ref, "original": s_orig}, {"reformulated": ref, "original": orig})


__all__ = [
    "BUILDERS",
    "BenchmarkCase",
    "Comparison",
    "FOOTING_HALF_WIDTH",
    "FOOTING_LOAD",
    "STRIP",
    "build_footing_case",
    "build_locking_case",
    "compare_formulations",
    "in_strip",
    "surface_settlement",
]
