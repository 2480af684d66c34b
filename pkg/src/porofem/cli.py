"""Command line front end: configuration files, experiments and their output files.

A configuration is a flat ``key = value`` file with optional ``[run]`` and
``[params]`` sections. Several pairs may share a line, lists are comma
separated and numbers may be written as fractions (``dt = 1/100``)::

    [run]
    experiment = converge-space  case = test1
    h = 1/4, 1/8, 1/16
    [params]
    lambda_star = 1e-5

Exit status is 0 on success, 2 when an acceptance threshold is missed and
1 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
import time
import warnings
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import io as pio
from .bench import (
    build_footing_case,
    build_locking_case,
    compare_formulations,
    surface_settlement,
)
from .linalg import SolverError
from .mesh import unit_square
from .params import (
    FOOTING_PARAMS,
    LOCKING_PARAMS,
    MANUFACTURED_PARAMS,
    ParameterError,
    PhysicalParams,
    validate,
)
from .stepper import Scheme, SchemeConfig, SchemeError
from .verification import (
    MANUFACTURED,
    cells_for,
    energy_ledger,
    error_norms,
    infsup_estimate,
    mass_balance,
    ordered_map,
    oscillation_metric,
    pure_neumann_case,
    spatial_convergence,
    temporal_ratio,
)

log = logging.getLogger("porofem")

EXPERIMENTS = (
    "converge-space",
    "converge-time",
    "energy-check",
    "mass-check",
    "infsup",
    "bench-locking",
    "bench-footing",
    "single-run",
)
CASES = ("test1", "test2", "locking", "footing", "custom")

DEFAULT_CASE = {
    "converge-space": "test1",
    "converge-time": "test1",
    "energy-check": "custom",
    "mass-check": "custom",
    "infsup": "custom",
    "bench-locking": "locking",
    "bench-footing": "footing",
    "single-run": "test1",
}
ALLOWED_CASES = {
    "converge-space": ("test1", "test2"),
    "converge-time": ("test1", "test2"),
    "energy-check": ("custom",),
    "mass-check": ("custom",),
    "infsup": ("custom",),
    "bench-locking": ("locking",),
    "bench-footing": ("footing",),
    "single-run": CASES,
}
BASE_PARAMS = {"test1": MANUFACTURED_PARAMS, "test2": MANUFACTURED_PARAMS, "custom": MANUFACTURED_PARAMS, "locking": LOCKING_PARAMS, "footing": FOOTING_PARAMS}

DEFAULT_DT = 1 / 100
DEFAULT_H = (1 / 4, 1 / 8, 1 / 16, 1 / 32)
TIME_CHAIN = (1 / 10, 1 / 20, 1 / 40, 1 / 80)
TIME_MESH = {"test1": 1 / 8, "test2": 1 / 10}
ENERGY_STEPS = 10

# expected orders of a spatial study and the accepted deviation
ORDERS = {"tau_L2": 3.0, "tau_H1": 2.0, "p_L2": 2.0, "p_H1": 1.0}
ORDER_BAND = 0.2
RATIO_BAND = (1.9, 2.1)


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class RunConfig:
    """A fully defaulted experiment description.

    ``dt`` and ``h`` are tuples; single-run experiments use their first
    entry. ``cells`` and ``steps`` size the benchmark meshes and schedules.
    """

    experiment: str
    case: str
    theta: int = 1
    dt: tuple = (DEFAULT_DT,)
    T: float = 1.0
    h: tuple = DEFAULT_H
    out: str = "porofem-out"
    rtol: float = 1e-10
    snapshot_every: int = 0
    samples: int = 201
    cells: int = 0
    steps: int = 0
    space: str = "free"
    pressure_bc: str = "implicit"
    dump_matrices: bool = False
    params: PhysicalParams = MANUFACTURED_PARAMS

    def scheme_config(self, dt=None, T=None) -> SchemeConfig:
        return SchemeConfig(
            theta=self.theta,
            dt=self.dt[0] if dt is None else dt,
            T=self.T if T is None else T,
            pressure_bc=self.pressure_bc,
            solver_rtol=self.rtol,
        )


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_PAIR = re.compile(r"([A-Za-z_][\w\-]*)\s*=")


def _number(text: str, line) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}", line) from None


def _numbers(text, line) -> tuple:
    items = [s for s in text.split(",") if s.strip()]
    if not items:
        raise ConfigError("empty list", line)
    return tuple(_number(s, line) for s in items)


def _integer(text, line) -> int:
    v = _number(text, line)
    if v != int(v):
        raise ConfigError(f"expected an integer, got {text!r}", line)
    return int(v)


def _flag(text, line) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}", line)


def _word(text, line) -> str:
    t = text.strip()
    if not t or any(c.isspace() for c in t):
        raise ConfigError(f"expected a single word, got {text!r}", line)
    return t


RUN_KEYS = {
    "experiment": _word,
    "case": _word,
    "theta": _integer,
    "dt": _numbers,
    "T": _number,
    "h": _numbers,
    "out": _word,
    "rtol": _number,
    "snapshot_every": _integer,
    "samples": _integer,
    "cells": _integer,
    "steps": _integer,
    "space": _word,
    "pressure_bc": _word,
    "dump_matrices": _flag,
}
PARAM_KEYS = {
    "lambda_star": _number,
    "E": _number,
    "nu": _number,
    "b0": _number,
    "a0": _number,
    "K": _numbers,
    "theta_f": _number,
    "rho_f_g": _numbers,
}
SECTIONS = {"run": RUN_KEYS, "params": PARAM_KEYS}


def _pairs(body: str, line: int):
    matches = list(_PAIR.finditer(body))
    if not matches or body[: matches[0].start()].strip():
        raise ConfigError(f"expected key = value, got {body.strip()!r}", line)
    for m, nxt in zip(matches, matches[1:] + [None]):
        value = body[m.end() : nxt.start() if nxt else len(body)].strip()
        if not value:
            raise ConfigError(f"missing value for {m.group(1)!r}", line)
        yield m.group(1), value


def read_config(text: str) -> dict:
    """Raw ``{section: {key: (value, line)}}`` with values converted but not defaulted."""
    raw = {name: {} for name in SECTIONS}
    section = "run"
    for lineno, full in enumerate(text.splitlines(), start=1):
        body = full.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ConfigError(f"malformed section header {body!r}", lineno)
            section = body[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        for key, value in _pairs(body, lineno):
            keys = SECTIONS[section]
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
            if key in raw[section]:
                raise ConfigError(f"duplicate key {key!r}", lineno)
            raw[section][key] = (keys[key](value, lineno), lineno)
    return raw


def _build_params(base: PhysicalParams, overrides: dict) -> PhysicalParams:
    changes = {}
    for key, (value, line) in overrides.items():
        if key == "K":
            if len(value) == 1:
                value = value[0]
            elif len(value) == 4:
                value = np.array(value).reshape(2, 2)
            else:
                raise ConfigError("K takes 1 or 4 entries", line)
        if key == "rho_f_g" and len(value) != 2:
            raise ConfigError("rho_f_g takes 2 entries", line)
        changes[key] = value
    try:
        prm = base.with_(**changes)
        validate(prm)
    except ParameterError as exc:
        line = min((ln for _, ln in overrides.values()), default=None)
        raise ConfigError(f"invalid parameters: {exc}", line) from exc
    return prm


def resolve(raw: dict, experiment: str | None = None) -> RunConfig:
    """Apply per-experiment defaults and check values."""
    run = {k: v for k, (v, _) in raw["run"].items()}
    lines = {k: ln for k, (_, ln) in raw["run"].items()}

    if experiment is not None:
        if "experiment" in run and run["experiment"] != experiment:
            raise ConfigError(f"config is for {run['experiment']!r}, not {experiment!r}", lines["experiment"])
        run["experiment"] = experiment
    exp = run.get("experiment")
    if exp is None:
        raise ConfigError("no experiment given")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}", lines.get("experiment"))
    case = run.setdefault("case", DEFAULT_CASE[exp])
    if case not in ALLOWED_CASES[exp]:
        raise ConfigError(f"case {case!r} is not available for {exp}", lines.get("case"))

    if run.setdefault("theta", 1) not in (0, 1):
        raise ConfigError(f"theta must be 0 or 1, got {run['theta']}", lines.get("theta"))
    if exp == "converge-time":
        run.setdefault("dt", TIME_CHAIN)
        run.setdefault("h", (TIME_MESH.get(case, 1 / 8),))
    elif exp in ("energy-check", "mass-check"):
        run.setdefault("dt", (DEFAULT_DT,))
        run.setdefault("h", (1 / 8,))
        run.setdefault("T", ENERGY_STEPS * run["dt"][0])
    elif exp == "infsup":
        run.setdefault("h", (1 / 4, 1 / 8, 1 / 16))
    elif exp == "single-run":
        run.setdefault("h", (1 / 8,))
    elif exp == "bench-locking":
        run.setdefault("cells", 16)
    elif exp == "bench-footing":
        run.setdefault("cells", 20)
        run.setdefault("steps", 20)
        run.setdefault("T", 0.01)
        run.setdefault("dt", (run["T"] / run["steps"],))

    params = _build_params(BASE_PARAMS[case], raw["params"])
    try:
        cfg = RunConfig(**{k: v for k, v in run.items()}, params=params)
    except TypeError as exc:  # pragma: no cover - keys are filtered above
        raise ConfigError(str(exc)) from exc
    return check(cfg, lines)


def check(cfg: RunConfig, lines=None) -> RunConfig:
    lines = lines or {}

    def fail(msg, key):
        raise ConfigError(msg, lines.get(key))

    if any(not v > 0 for v in cfg.dt):
        fail("time steps must be positive", "dt")
    if any(not v > 0 for v in cfg.h):
        fail("mesh sizes must be positive", "h")
    if cfg.case in ("test1", "test2", "custom"):
        for h in cfg.h:
            try:
                cells_for(h)
            except ValueError as exc:
                fail(str(exc), "h")
    if not cfg.T >= 0:
        fail("final time must be non-negative", "T")
    if not cfg.rtol > 0:
        fail("rtol must be positive", "rtol")
    if cfg.snapshot_every < 0:
        fail("snapshot_every must be >= 0", "snapshot_every")
    if cfg.samples < 2:
        fail("samples must be at least 2", "samples")
    if cfg.cells < 0 or cfg.steps < 0:
        fail("cells and steps must be non-negative", "cells")
    if cfg.space not in ("free", "clamped"):
        fail(f"space must be 'free' or 'clamped', got {cfg.space!r}", "space")
    if cfg.pressure_bc not in ("implicit", "lagged"):
        fail(f"pressure_bc must be 'implicit' or 'lagged', got {cfg.pressure_bc!r}", "pressure_bc")
    if cfg.experiment in ("converge-space", "converge-time", "energy-check", "mass-check", "single-run"):
        for dt in cfg.dt:
            try:
                cfg.scheme_config(dt=dt).n_steps
            except SchemeError as exc:
                fail(str(exc), "dt")
    return cfg


def parse_config(text: str, experiment: str | None = None) -> RunConfig:
    return resolve(read_config(text), experiment)


def _emit_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list, np.ndarray)):
        return ", ".join(_emit_value(x) for x in np.asarray(v, dtype=float).reshape(-1))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_config(cfg: RunConfig) -> str:
    """Text that parses back to ``cfg``."""
    out = ["[run]"]
    for f in fields(RunConfig):
        if f.name != "params":
            out.append(f"{f.name} = {_emit_value(getattr(cfg, f.name))}")
    out.append("[params]")
    p = cfg.params
    for key in PARAM_KEYS:
        out.append(f"{key} = {_emit_value(getattr(p, key))}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def worker_count() -> int:
    """Thread count from ``POROFEM_THREADS`` (default 1)."""
    text = os.environ.get("POROFEM_THREADS", "").strip()
    if not text:
        return 1
    try:
        n = int(text)
    except ValueError:
        raise ConfigError(f"POROFEM_THREADS must be a positive integer, got {text!r}") from None
    if n < 1:
        raise ConfigError(f"POROFEM_THREADS must be a positive integer, got {text!r}")
    return n


@dataclass
class Outcome:
    passed: bool
    summary: dict = field(default_factory=dict)
    files: list = field(default_factory=list)


def _finite(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _exact(cfg):
    return MANUFACTURED[cfg.case](cfg.params)


def _maybe_dump(cfg, scheme, out: Path, files):
    if not cfg.dump_matrices:
        return
    solver = scheme._monolithic() if scheme.config.theta == 1 else scheme._stokes()
    files.append(pio.dump_matrix(solver.A, out / "system.mtx"))


def _snapshots(cfg, scheme, out: Path, stem: str, files):
    """Run ``scheme`` writing VTK files every ``snapshot_every`` steps and at the end."""
    mesh = scheme.case.mesh
    every = cfg.snapshot_every

    def write(state):
        files.append(pio.write_vtk(mesh, pio.state_fields(state, mesh), out / f"{stem}_{state.n:05d}.vtk", f"{stem} t={state.t:.17g}"))

    def cb(state):
        if every and state.n % every == 0:
            write(state)

    states = scheme.run(cb)
    if not every or states[-1].n % every:
        write(states[-1])
    return states


def run_converge_space(cfg: RunConfig, out: Path, workers: int) -> Outcome:
    exact = _exact(cfg)
    rep = spatial_convergence(exact, cfg.h, cfg.scheme_config(), workers=workers)
    files = [pio.write_csv(rep, out / f"{cfg.case}_space_tau.csv", ["tau_L2", "tau_H1"])]
    files.append(pio.write_csv(rep, out / f"{cfg.case}_space_p.csv", ["p_L2", "p_H1"]))
    finest = {k: rep.rate(k)[-1] if len(rep.values) > 1 else None for k in ORDERS}
    checks = {k: r is not None and abs(r - ORDERS[k]) <= ORDER_BAND for k, r in finest.items()}
    summary = {
        "h": list(rep.values),
        "errors": {k: list(v) for k, v in rep.columns.items()},
        "rates": {k: rep.rate(k) for k in rep.columns},
        "finest_rate": finest,
        "checks": checks,
    }
    return Outcome(all(checks.values()), summary, files)


def run_converge_time(cfg: RunConfig, out: Path, workers: int) -> Outcome:
    case = _exact(cfg).case(unit_square(cells_for(cfg.h[0])))
    rep = temporal_ratio(case, cfg.dt, T=cfg.T, theta=cfg.theta, workers=workers)
    files = [pio.write_csv(rep, out / f"{cfg.case}_time.csv", ["tau", "p"])]
    checks = {}
    for k in ("tau", "p"):
        d = rep.derived[k]
        ok = [ex or RATIO_BAND[0] <= r <= RATIO_BAND[1] for r, ex in zip(d["ratios"], d["temporally_exact"])]
        if k == "p":
            ok = [not ex and RATIO_BAND[0] <= r <= RATIO_BAND[1] for r, ex in zip(d["ratios"], d["temporally_exact"])]
        checks[k] = bool(ok) and all(ok)
    summary = {
        "dt": list(cfg.dt),
        "h": cfg.h[0],
        "differences": {k: list(v) for k, v in rep.columns.items()},
        "ratios": {k: [_finite(r) for r in d["ratios"]] for k, d in rep.derived.items()},
        "temporally_exact": {k: d["temporally_exact"] for k, d in rep.derived.items()},
        "checks": checks,
    }
    return Outcome(all(checks.values()), summary, files)


def _neumann_run(cfg: RunConfig, out: Path):
    mesh = unit_square(cells_for(cfg.h[0]))
    scheme = Scheme(pure_neumann_case(mesh, cfg.params), cfg.scheme_config())
    files = []
    _maybe_dump(cfg, scheme, out, files)
    return scheme, _snapshots(cfg, scheme, out, "neumann", files) if cfg.snapshot_every else scheme.run(), files


def run_energy_check(cfg: RunConfig, out: Path, workers: int) -> Outcome:
    scheme, states, files = _neumann_run(cfg, out)
    L = energy_ledger(states, scheme)
    scale = max(1.0, abs(L.J[0]))
    t = [s.t for s in states]
    header, rows = ["t", "J", "S", "residual"], [[ti, j, s, r] for ti, j, s, r in zip(t, L.J, L.S, L.residual)]
    if cfg.theta == 1:
        worst = float(np.abs(L.residual).max())
        passed = worst <= 1e-8 * scale
    else:
        header += ["S_hat", "residual_hat"]
        rows = [r + [sh, rh] for r, sh, rh in zip(rows, L.S_hat, L.residual_hat)]
        worst = float(L.residual_hat.max())
        passed = worst <= 1e-8
    files.append(pio.write_rows(header, rows, out / "energy.csv"))
    summary = {"J0": float(L.J[0]), "J_final": float(L.J[-1]), "worst_residual": worst, "steps": len(states) - 1}
    return Outcome(bool(passed), summary, files)


def run_mass_check(cfg: RunConfig, out: Path, workers: int) -> Outcome:
    scheme, states, files = _neumann_run(cfg, out)
    res = mass_balance(states, scheme)
    t = np.array([s.t for s in states])
    ok = np.abs(res) <= 1e-10 * (1.0 + t)
    files.append(pio.write_rows(["t", "residual"], [[a, b] for a, b in zip(t, res)], out / "mass.csv"))
    summary = {"worst_residual": float(np.abs(res).max()), "steps": len(states) - 1}
    return Outcome(bool(ok.all()), summary, files)


def run_infsup(cfg: RunConfig, out: Path, workers: int) -> Outcome:
    betas = ordered_map(lambda h: infsup_estimate(unit_square(cells_for(h)), cfg.space), cfg.h, workers)
    variation = (max(betas) - min(betas)) / max(betas)
    files = [pio.write_rows(["h", "beta"], [[h, b] for h, b in zip(cfg.h, betas)], out / "infsup.csv")]
    checks = {"positive": min(betas) > 0.1, "uniform": variation < 0.2}
    summary = {"h": list(cfg.h), "beta": betas, "relative_variation": variation, "checks": checks}
    return Outcome(all(checks.values()), summary, files)


def _profiles(comp, out: Path, stem: str, files):
    for label, (a, b) in comp.bench.lines.items():
        s = np.linspace(0.0, 1.0, len(comp.reformulated[label]["values"]))
        pts = np.asarray(a) + s[:, None] * (np.asarray(b) - np.asarray(a))
        rows = [[x, y, r, o] for (x, y), r, o in zip(pts, comp.reformulated[label]["values"], comp.original[label]["values"])]
        files.append(pio.write_rows(["x", "y", "p_reformulated", "p_original"], rows, out / f"{stem}_{label}.csv"))


def _indices(comp):
    return {
        label: {
            "reformulated": comp.reformulated[label]["index"],
            "original": comp.original[label]["index"],
            "ratio": _finite(comp.ratio(label)),
        }
        for label in comp.bench.lines
    }


def _bench_snapshots(comp, out, stem, files):
    mesh = comp.schemes["reformulated"].case.mesh
    for model, state in comp.states.items():
        files.append(pio.write_vtk(mesh, pio.state_fields(state, mesh), out / f"{stem}_{model}.vtk", f"{stem} {model}"))


def run_bench_locking(cfg: RunConfig, out: Path, workers: int) -> Outcome:
    bench = build_locking_case(cfg.cells, cfg.dt[0], cfg.params)
    if cfg.T != bench.T:
        bench = replace(bench, T=cfg.T)
    comp = compare_formulations(bench, cfg.theta, cfg.samples)
    files = []
    _profiles(comp, out, "locking", files)
    _bench_snapshots(comp, out, "locking", files)
    idx = _indices(comp)["mid-height"]
    checks = {"reformulated_index": idx["reformulated"] <= 1.5, "original_ratio": (idx["ratio"] or math.inf) >= 5.0}
    return Outcome(all(checks.values()), {"indices": _indices(comp), "checks": checks}, files)


def run_bench_footing(cfg: RunConfig, out: Path, workers: int) -> Outcome:
    bench = replace(build_footing_case(cfg.cells, cfg.steps or 20, cfg.params), T=cfg.T, dt=cfg.dt[0])
    comp = compare_formulations(bench, cfg.theta, cfg.samples)
    files = []
    _profiles(comp, out, "footing", files)
    _bench_snapshots(comp, out, "footing", files)
    state, scheme = comp.states["reformulated"], comp.schemes["reformulated"]
    settlement = surface_settlement(state, scheme)
    idx = _indices(comp)
    checks = {
        "finite": bool(np.all(np.isfinite(state.tau)) and np.all(np.isfinite(state.p_broken))),
        "settles_downward": settlement < 0,
        "reformulated_index": idx["mid-depth"]["reformulated"] <= 1.5,
    }
    summary = {"settlement": settlement, "indices": idx, "checks": checks}
    return Outcome(all(checks.values()), summary, files)


def run_single(cfg: RunConfig, out: Path, workers: int) -> Outcome:
    files, lines = [], {}
    if cfg.case in MANUFACTURED:
        exact = _exact(cfg)
        case = exact.case(unit_square(cells_for(cfg.h[0])))
    elif cfg.case == "custom":
        exact = None
        case = pure_neumann_case(unit_square(cells_for(cfg.h[0])), cfg.params)
    else:
        builder = build_locking_case if cfg.case == "locking" else build_footing_case
        bench = builder(cfg.cells or (16 if cfg.case == "locking" else 20), params=cfg.params)
        exact, lines = None, bench.lines
        case = bench.case()
    scheme = Scheme(case, cfg.scheme_config())
    _maybe_dump(cfg, scheme, out, files)
    states = _snapshots(cfg, scheme, out, cfg.case, files)
    summary = {"steps": len(states) - 1, "t": states[-1].t, "n_dofs": scheme.nV + 2 * scheme.nS}
    if exact is not None:
        summary["errors"] = error_norms(states[-1], exact, scheme)
    for label, (a, b) in lines.items():
        summary.setdefault("oscillation", {})[label] = oscillation_metric(states[-1], case.mesh, a, b, cfg.samples)["index"]
    return Outcome(True, summary, files)


RUNNERS = {
    "converge-space": run_converge_space,
    "converge-time": run_converge_time,
    "energy-check": run_energy_check,
    "mass-check": run_mass_check,
    "infsup": run_infsup,
    "bench-locking": run_bench_locking,
    "bench-footing": run_bench_footing,
    "single-run": run_single,
}


def execute(cfg: RunConfig, workers: int = 1) -> Outcome:
    """Run an experiment, write its files and ``summary.json`` under ``cfg.out``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(emit_config(cfg))
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        result = RUNNERS[cfg.experiment](cfg, out, workers)
    for w in caught:
        log.warning("%s", w.message)
    log.info("%s finished in %.2f s", cfg.experiment, time.perf_counter() - start)
    summary = {
        "experiment": cfg.experiment,
        "case": cfg.case,
        "theta": cfg.theta,
        "passed": bool(result.passed),
        **result.summary,
        "files": sorted(Path(f).name for f in result.files),
    }
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return result


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _finite(obj)
    return obj


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fraction_arg(text):
    try:
        return _number(text, None)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="porofem", description="Biot consolidation experiments with P2-P1-P1 elements.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="configuration file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--theta", type=int, choices=(0, 1))
        p.add_argument("--h", type=_fraction_arg, nargs="+")
        p.add_argument("--dt", type=_fraction_arg, nargs="+")
        p.add_argument("--T", type=_fraction_arg)
        p.add_argument("--case", choices=CASES)
    return parser


def config_from_args(args) -> RunConfig:
    text = args.config.read_text() if args.config else ""
    raw = read_config(text)
    for key in ("out", "theta", "h", "dt", "T", "case"):
        value = getattr(args, key)
        if value is not None:
            raw["run"][key] = (tuple(value) if isinstance(value, list) else value, None)
    return resolve(raw, args.experiment)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        workers = worker_count()
        cfg = config_from_args(args)
        result = execute(cfg, workers)
    except (ConfigError, OSError) as exc:
        print(f"porofem: {exc}", file=sys.stderr)
        return 1
    except (SolverError, SchemeError, ParameterError, np.linalg.LinAlgError) as exc:
        print(f"porofem: {cfg.experiment} failed: {exc}", file=sys.stderr)
        return 1
    print(f"{cfg.experiment}: {'PASS' if result.passed else 'FAIL'} (see {Path(cfg.out) / 'summary.json'})")
    return 0 if result.passed else 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
