"""Dense two-phase tableau simplex for ``max c.x  s.t.  A x <= b, x >= 0``.

Bland's rule picks both the entering and the leaving variable, so runs are
reproducible and cannot cycle.  Rows are equilibrated before pivoting; the
reported primal and dual vectors are re-solved from the final basis against
the unscaled data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-11
REDUCED_TOL = 1e-10  # objective entries are O(1); smaller reduced costs are roundoff


@dataclass
class SimplexResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "numerical"
    x: np.ndarray | None
    value: float | None
    y: np.ndarray | None
    basis: list[int] | None
    iterations: int


def _pivot(T: np.ndarray, row: int, col: int):
    T[row] /= T[row, col]
    colvals = T[:, col].copy()
    colvals[row] = 0.0
    T -= np.outer(colvals, T[row])


def _run(T: np.ndarray, basis: list[int], obj: np.ndarray, allowed: int) -> tuple[str, int]:
    """Maximise ``obj`` over the first ``allowed`` columns of tableau ``T`` in place."""
    iters = 0
    while True:
        reduced = obj[:allowed] - obj[basis] @ T[:, :allowed]
        candidates = np.flatnonzero(reduced > REDUCED_TOL * max(1.0, float(np.abs(obj).max())))
        if candidates.size == 0:
            return "optimal", iters
        col = int(candidates[0])
        column = T[:, col]
        # relative threshold: after a small pivot, roundoff in this column grows with it
        rows = np.flatnonzero(column > PIVOT_TOL * max(1.0, float(np.abs(column).max())))
        if rows.size == 0:
            return "unbounded", iters
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        row = int(min(tied, key=lambda r: basis[r]))
        _pivot(T, row, col)
        basis[row] = col
        iters += 1


def simplex(c, A, b) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n_rows, n_vars = A.shape

    full = np.hstack([A, np.eye(n_rows)])  # structural + slack columns
    scale = np.abs(full).max(axis=1)
    scale[scale == 0] = 1.0
    sign = np.where(b < 0, -1.0, 1.0)
    rows_scaled = (sign / scale)[:, None]
    needs_art = np.flatnonzero(b < 0)
    n_art = needs_art.size
    n_real = n_vars + n_rows

    T = np.zeros((n_rows, n_real + n_art + 1))
    T[:, :n_real] = full * rows_scaled
    T[:, -1] = b * rows_scaled[:, 0]
    basis = [n_vars + i for i in range(n_rows)]
    for k, i in enumerate(needs_art):
        T[i, n_real + k] = 1.0
        basis[i] = n_real + k

    iters = 0
    if n_art:
        phase1 = np.zeros(n_real + n_art)
        phase1[n_real:] = -1.0
        _, it = _run(T, basis, phase1, n_real + n_art)
        iters += it
        if phase1[basis] @ T[:, -1] < -1e-9:
            return SimplexResult("infeasible", None, None, None, None, iters)
        # drive leftover zero-level artificials out; a row with nothing but
        # roundoff left is a redundant constraint and is dropped
        redundant_tol = 1e-9 * max(1.0, float(np.abs(T[:, :n_real]).max()))
        keep = []
        for i, var in enumerate(basis):
            if var >= n_real:
                row = np.abs(T[i, :n_real])
                j = int(np.argmax(row))
                if row[j] <= redundant_tol:
                    continue
                _pivot(T, i, j)
                basis[i] = j
            keep.append(i)
        T = np.hstack([T[keep, :n_real], T[keep, -1:]])
        basis = [basis[i] for i in keep]
        rows_kept = np.array(keep)
    else:
        rows_kept = np.arange(n_rows)

    obj = np.concatenate([c, np.zeros(n_rows)])
    status, it = _run(T, basis, obj, n_real)
    iters += it
    if status != "optimal":
        return SimplexResult(status, None, None, None, None, iters)

    B = full[np.ix_(rows_kept, basis)]
    try:
        x_basic = np.linalg.solve(B, b[rows_kept])
        y = np.zeros(n_rows)
        y[rows_kept] = np.linalg.solve(B.T, obj[basis])
    except np.linalg.LinAlgError:
        return SimplexResult("numerical", None, None, None, list(basis), iters)
    x = np.zeros(n_real)
    x[basis] = x_basic
    x = x[:n_vars]
    x[np.abs(x) < 1e-15] = 0.0
    return SimplexResult("optimal", x, float(c @ x), y, list(basis), iters)
