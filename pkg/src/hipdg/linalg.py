"""Sparse assembly and solvers for the condensed trace system (scipy-backed)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError

METHODS = ("direct", "cg", "bicgstab")
MAX_REFINEMENT_STEPS = 5


@dataclass(frozen=True)
class SolveReport:
    method: str
    iterations: int
    residual: float


def from_triplets(shape, rows, cols=None, vals=None) -> sp.csr_matrix:
    """CSR matrix from (row, col, value) triplets; duplicates are summed.

    Accepts either separate ``rows, cols, vals`` arrays or an iterable of
    ``(i, j, v)`` tuples as the second argument.  ``shape`` may be an int.
    """
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape), int(shape))
    if cols is None:
        trip = list(rows)
        rows = np.array([t[0] for t in trip], dtype=np.int64)
        cols = np.array([t[1] for t in trip], dtype=np.int64)
        vals = np.array([t[2] for t in trip], dtype=float)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= shape[0] or cols.max() >= shape[1]):
        raise ValueError("triplet index out of range")
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _relres(S, x, g) -> float:
    gn = np.linalg.norm(g)
    r = np.linalg.norm(S @ x - g)
    return float(r / gn) if gn > 0 else float(r)


def rounding_floor(S, x, g) -> float:
    """Relative residual attainable in double precision: 64 eps ||S|| ||x|| / ||g|| (inf-norms)."""
    gn = np.abs(g).max()
    if gn == 0:
        return 0.0
    Snorm = np.abs(S).sum(axis=1).max()
    return float(64 * np.finfo(float).eps * Snorm * np.abs(x).max() / gn)


def solve(S, g, symmetric_hint: bool = False, tol: float = 1e-12, method: str = "direct"):
    """Solve S x = g; returns (x, SolveReport).

    ``method="direct"`` uses a sparse LU factorization.  ``"cg"`` requires
    ``symmetric_hint``; ``"bicgstab"`` works for any scheme.  Raises
    SolverError when the relative residual exceeds both ``tol`` and the
    double-precision rounding floor of the system.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    S = sp.csr_matrix(S)
    g = np.asarray(g, dtype=float)
    if S.shape[0] != S.shape[1] or S.shape[0] != g.shape[0]:
        raise ValueError("dimension mismatch")
    n = S.shape[0]
    if n == 0:
        return np.zeros(0), SolveReport(method, 0, 0.0)
    if not np.any(g):
        return np.zeros(n), SolveReport(method, 0, 0.0)

    iterations = 0
    if method == "direct":
        try:
            lu = spla.splu(S.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"sparse factorization failed: {exc}") from exc
        x = lu.solve(g)
        res = _relres(S, x, g)
        # iterative refinement absorbs the factorization rounding
        while res > tol and iterations < MAX_REFINEMENT_STEPS:
            x_new = x + lu.solve(g - S @ x)
            res_new = _relres(S, x_new, g)
            iterations += 1
            if not res_new < res:
                break
            x, res = x_new, res_new
    else:
        if method == "cg" and not symmetric_hint:
            raise ValueError("conjugate gradients requires a symmetric system")
        count = [0]

        def cb(_):
            count[0] += 1

        krylov = spla.cg if method == "cg" else spla.bicgstab
        x, info = krylov(S, g, rtol=tol, atol=0.0, maxiter=20 * n, callback=cb)
        iterations = count[0]
        res = _relres(S, x, g)
        if info < 0:
            raise SolverError(f"{method} breakdown", res)
    if not np.isfinite(res) or res > max(tol, rounding_floor(S, x, g)):
        raise SolverError(f"{method} did not reach tolerance {tol:g}", res)
    return x, SolveReport(method, iterations, res)
