"""CSV tables, VTK legacy snapshots and MatrixMarket dumps."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np
import scipy.io

from .mesh import Mesh

# table headings for the error columns of a convergence report
HEADINGS = {
    "tau_L2": "||tau-tau_h||_L2",
    "tau_H1": "||tau-tau_h||_H1",
    "p_L2": "||p-p_h||_L2",
    "p_H1": "||p-p_h||_H1",
    "delta_L2": "||delta-delta_h||_L2",
    "varpi_L2": "||varpi-varpi_h||_L2",
    "tau": "||tau_dt-tau_dt/2||_L2",
    "p": "||p_dt-p_dt/2||_L2",
}


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "{:.17g}".format(float(v))


def table_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def report_table(report, names=None):
    """Header and rows of a convergence report.

    Spatial reports get ``h, error, CR, ...``. Temporal reports list the
    successive differences and their ratio ``rho`` instead of rates.
    """
    names = names or list(report.columns)
    if report.key == "dt":
        header = ["dt"]
        for n in names:
            header += [HEADINGS.get(n, n), "rho"]
        rows = []
        for i, v in enumerate(report.values):
            row = [v]
            for n in names:
                ratios = report.derived.get(n, {}).get("ratios", [])
                rho = ratios[i - 1] if 0 < i <= len(ratios) else None
                row += [report.columns[n][i], rho]
            rows.append(row)
        return header, rows
    header = [report.key]
    for n in names:
        header += [HEADINGS.get(n, n), "CR"]
    return header, report.rows(names)


def write_csv(report, path, names=None) -> Path:
    header, rows = report_table(report, names)
    return write_rows(header, rows, path)


def write_rows(header, rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(table_text(header, rows))
    return path


# ---------------------------------------------------------------------------
# VTK
# ---------------------------------------------------------------------------


def lumped_projection(broken: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Mass-lumped L2 projection of an elementwise linear field onto P1."""
    area = mesh.triangle_areas()
    tri = mesh.triangles
    # exact integral of the broken field against each hat function
    local = area[:, None] / 12.0 * (broken + broken.sum(axis=1, keepdims=True))
    rhs = np.zeros(mesh.n_vertices)
    lumped = np.zeros(mesh.n_vertices)
    np.add.at(rhs, tri, local)
    np.add.at(lumped, tri, np.repeat(area[:, None] / 3.0, 3, axis=1))
    return rhs / lumped


def state_fields(state, mesh: Mesh, project: bool = True) -> dict:
    """Output fields of a state on the vertex/cell grid.

    Vertex values of ``tau`` are its first ``n_vertices`` P2 nodes. Broken
    fields become cell averages and, if ``project``, lumped projections
    named ``*_projected``.
    """
    nv = mesh.n_vertices
    out = {"tau": np.asarray(state.tau).reshape(-1, 2)[:nv]}
    for name in ("delta", "varpi"):
        if hasattr(state, name):
            out[name] = np.asarray(getattr(state, name))
    if not hasattr(state, "delta") and hasattr(state, "p") and np.ndim(state.p) == 1:
        out["p_nodal"] = np.asarray(state.p)
    for name in ("p", "q"):
        broken = getattr(state, f"{name}_broken", None)
        if broken is None:
            continue
        out[name] = broken.mean(axis=1)
        if project:
            out[f"{name}_projected"] = lumped_projection(broken, mesh)
    return out


def vtk_text(mesh: Mesh, fields: dict | None = None, title: str = "porofem") -> str:
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {nv} double")
    lines += [f"{fmt(x)} {fmt(y)} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    point, cell = [], []
    for name, v in (fields or {}).items():
        v = np.asarray(v, dtype=float)
        if v.shape == (nv, 2):
            point.append(f"VECTORS {name} double")
            point += [f"{fmt(a)} {fmt(b)} 0" for a, b in v]
        elif v.shape == (nv,):
            point += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [fmt(a) for a in v]
        elif v.shape == (nt,):
            cell += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [fmt(a) for a in v]
        else:
            raise ValueError(f"field {name!r} has shape {v.shape}; expected ({nv},), ({nv}, 2) or ({nt},)")
    if cell:
        lines += [f"CELL_DATA {nt}"] + cell
    if point:
        lines += [f"POINT_DATA {nv}"] + point
    return "\n".join(lines) + "\n"


def write_vtk(mesh: Mesh, fields: dict | None, path, title: str = "porofem") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(vtk_text(mesh, fields, title))
    return path


def dump_matrix(A, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(path), A)
    return path


__all__ = [
    "HEADINGS",
    "dump_matrix",
    "fmt",
    "lumped_projection",
    "report_table",
    "state_fields",
    "table_text",
    "vtk_text",
    "write_csv",
    "write_rows",
    "write_vtk",
]
