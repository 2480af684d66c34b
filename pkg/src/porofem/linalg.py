"""Sparse assembly containers, direct solves and Dirichlet elimination.

Matrices are ``scipy.sparse`` CSR matrices; :class:`TripletBuffer` collects
element contributions in coordinate form and sums duplicates on
finalisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sps
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    pass


class ConstraintError(ValueError):
    pass


class TripletBuffer:
    """Single-writer coordinate buffer for element contributions."""

    def __init__(self, shape):
        self.shape = tuple(shape)
        self._rows, self._cols, self._vals = [], [], []
        self._final = None

    def add(self, rows, cols, values):
        """Add dense element blocks.

        ``rows`` is ``(ne, nr)``, ``cols`` ``(ne, nc)`` and ``values``
        ``(ne, nr, nc)``.
        """
        if self._final is not None:
            raise RuntimeError("buffer already finalised")
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        values = np.asarray(values, dtype=float)
        R = np.broadcast_to(rows[:, :, None], values.shape)
        C = np.broadcast_to(cols[:, None, :], values.shape)
        self._rows.append(R.ravel())
        self._cols.append(C.ravel())
        self._vals.append(values.ravel())

    def finalize(self) -> sps.csr_matrix:
        if self._final is None:
            if self._rows:
                r, c, v = (np.concatenate(a) for a in (self._rows, self._cols, self._vals))
            else:
                r = c = np.zeros(0, dtype=np.int64)
                v = np.zeros(0)
            A = sps.coo_matrix((v, (r, c)), shape=self.shape).tocsr()
            A.sum_duplicates()
            A.sort_indices()
            self._final = A
            self._rows = self._cols = self._vals = None
        return self._final


@dataclass
class BlockSystem:
    """Named blocks of a monolithic matrix.

    ``fields`` maps field name to size; the order of insertion defines the
    offsets. Missing blocks are zero.
    """

    fields: dict
    blocks: dict = field(default_factory=dict)

    @property
    def offsets(self) -> dict:
        out, k = {}, 0
        for name, n in self.fields.items():
            out[name] = k
            k += n
        return out

    @property
    def size(self) -> int:
        return sum(self.fields.values())

    def slice(self, name) -> slice:
        o = self.offsets[name]
        return slice(o, o + self.fields[name])

    def __setitem__(self, key, matrix):
        r, c = key
        shape = (self.fields[r], self.fields[c])
        if matrix.shape != shape:
            raise ValueError(f"block {key} has shape {matrix.shape}, expected {shape}")
        self.blocks[key] = sps.csr_matrix(matrix)

    def __getitem__(self, key):
        return self.blocks[key]

    def matrix(self) -> sps.csr_matrix:
        names = list(self.fields)
        grid = [[self.blocks.get((r, c)) for c in names] for r in names]
        for i, r in enumerate(names):
            if all(g is None for g in grid[i]):
                grid[i][i] = sps.csr_matrix((self.fields[r], self.fields[r]))
        for j, c in enumerate(names):
            if all(grid[i][j] is None for i in range(len(names))):
                grid[j][j] = sps.csr_matrix((self.fields[c], self.fields[c]))
        return sps.bmat(grid, format="csr")

    def split(self, x) -> dict:
        return {name: x[self.slice(name)] for name in self.fields}


def _check_residual(A, x, b, rtol):
    r = np.linalg.norm(A @ x - b)
    scale = spla.norm(A, np.inf) * np.linalg.norm(x) + np.linalg.norm(b)
    if r > rtol * max(scale, np.finfo(float).tiny):
        raise SolverError(f"direct solve residual {r:.3e} exceeds {rtol:g} * {scale:.3e}")


def _factor(A):
    A = sps.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise SolverError(f"matrix is not square: {A.shape}")
    try:
        return spla.splu(A)
    except RuntimeError as exc:
        empty_rows = np.flatnonzero(np.diff(sps.csr_matrix(A).indptr) == 0)
        empty_cols = np.flatnonzero(np.diff(A.indptr) == 0)
        where = ""
        if len(empty_rows):
            where = f"; empty row {empty_rows[0]}"
        elif len(empty_cols):
            where = f"; empty column {empty_cols[0]}"
        else:
            # locate the first vanishing pivot with a natural-order factorisation
            try:
                spla.splu(A, permc_spec="NATURAL", diag_pivot_thresh=1.0)
            except RuntimeError as inner:
                where = f"; {inner}"
        raise SolverError(f"singular matrix ({exc}){where}") from None


def solve_direct(A, b, rtol: float = 1e-10) -> np.ndarray:
    """Sparse LU solve with partial pivoting and a residual check."""
    A = sps.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    x = _factor(A).solve(b)
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution")
    _check_residual(A, x, b, rtol)
    return x


def _normalise_constraints(constraints, n):
    if constraints is None:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    if isinstance(constraints, tuple) and len(constraints) == 2 and np.ndim(constraints[0]) == 1:
        dofs, vals = constraints
    else:
        pairs = list(constraints)
        dofs = [d for d, _ in pairs]
        vals = [v for _, v in pairs]
    dofs = np.asarray(dofs, dtype=np.int64).reshape(-1)
    vals = np.asarray(vals, dtype=float).reshape(-1)
    if len(dofs) != len(vals):
        raise ConstraintError("constraint dofs and values differ in length")
    if len(dofs) and (dofs.min() < 0 or dofs.max() >= n):
        raise ConstraintError("constraint dof out of range")
    order = np.argsort(dofs, kind="stable")
    dofs, vals = dofs[order], vals[order]
    dup = np.flatnonzero(np.diff(dofs) == 0)
    for k in dup:
        if not np.isclose(vals[k], vals[k + 1], rtol=1e-12, atol=1e-14):
            raise ConstraintError(f"conflicting values {vals[k]} and {vals[k + 1]} for dof {dofs[k]}")
    keep = np.ones(len(dofs), dtype=bool)
    keep[dup + 1] = False
    return dofs[keep], vals[keep]


def apply_dirichlet(A, b, constraints):
    """Symmetric elimination of prescribed dofs.

    Constrained rows and columns are zeroed, the diagonal set to one and the
    column contributions moved to the right-hand side.
    """
    A = sps.csr_matrix(A)
    dofs, vals = _normalise_constraints(constraints, A.shape[0])
    b = np.array(b, dtype=float)
    if len(dofs) == 0:
        return A.copy(), b
    xc = np.zeros(A.shape[0])
    xc[dofs] = vals
    b -= A @ xc
    mask = np.ones(A.shape[0])
    mask[dofs] = 0.0
    D = sps.diags(mask)
    A_mod = (D @ A @ D + sps.diags(1.0 - mask)).tocsr()
    b[dofs] = vals
    return A_mod, b


class ConstrainedSolver:
    """Factor ``A`` once for a fixed set of constrained dofs and solve repeatedly."""

    def __init__(self, A, constrained_dofs, rtol: float = 1e-10):
        self.A = sps.csr_matrix(A)
        self.dofs = np.unique(np.asarray(constrained_dofs, dtype=np.int64))
        self.rtol = rtol
        n = self.A.shape[0]
        mask = np.ones(n)
        mask[self.dofs] = 0.0
        D = sps.diags(mask)
        self.A_mod = (D @ self.A @ D + sps.diags(1.0 - mask)).tocsr()
        self._lu = _factor(self.A_mod)

    def solve(self, b, values=None) -> np.ndarray:
        b = np.array(b, dtype=float)
        if len(self.dofs):
            vals = np.zeros(len(self.dofs)) if values is None else np.asarray(values, dtype=float)
            xc = np.zeros(len(b))
            xc[self.dofs] = vals
            b -= self.A @ xc
            b[self.dofs] = vals
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite solution")
        _check_residual(self.A_mod, x, b, self.rtol)
        return x


def smallest_generalized_eig(S, M, constraint=None):
    """Smallest eigenvalue of the symmetric pencil ``S x = lam M x``.

    ``constraint`` optionally restricts the problem to ``{x : c @ x = 0}``.
    Dense LAPACK solve; intended for pressure spaces of a few thousand dofs.
    Returns ``(lam, x)`` with ``x`` M-normalised.
    """
    S = S.toarray() if sps.issparse(S) else np.asarray(S, dtype=float)
    M = M.toarray() if sps.issparse(M) else np.asarray(M, dtype=float)
    Q = None
    if constraint is not None:
        c = np.asarray(constraint, dtype=float).reshape(-1, 1)
        # orthonormal basis of the complement of c
        Q = scipy.linalg.null_space(c.T)
        S = Q.T @ S @ Q
        M = Q.T @ M @ Q
    S = 0.5 * (S + S.T)
    M = 0.5 * (M + M.T)
    try:
        w, v = scipy.linalg.eigh(S, M, subset_by_index=[0, 0])
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"generalized eigenproblem failed: {exc}") from None
    x = v[:, 0]
    if Q is not None:
        x = Q @ x
    return float(w[0]), x


def write_matrix_market(path, A):
    scipy.io.mmwrite(str(path), sps.coo_matrix(A))
