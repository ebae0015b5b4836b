"""Two-phase dense simplex for box-constrained LPs with exact basis duals.

    minimize c'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lb <= x <= ub

Duals follow the sensitivity convention: y = d(optimum)/d(rhs), so for a
minimization the duals of <= rows are nonpositive at the optimum. The hot
pivot loop lives in the kernel selected by lmpsim.solvers (compiled or pure).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp_core
from ._simplex_py import STATUS_MAXITER, STATUS_OPTIMAL, STATUS_SINGULAR, STATUS_UNBOUNDED

_FEAS_TOL = 1e-7
_PIVOT_TOL = 1e-9
_DEG_TOL = 1e-7


@dataclass
class LpResult:
    status: str                     # optimal | infeasible | unbounded | maxiter | singular
    x: np.ndarray | None = None
    objective: float | None = None
    y_eq: np.ndarray | None = None  # duals of equality rows
    y_ub: np.ndarray | None = None  # duals of <= rows (nonpositive)
    dual_degenerate: bool = False   # a basic variable sits on a bound: duals may be non-unique
    alt_optima: bool = False        # a nonbasic variable has zero reduced cost
    niter: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def solve_lp(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, lb=None, ub=None,
             maxiter=None) -> LpResult:
    c = np.asarray(c, dtype=float)
    nv = c.size
    A_eq = np.zeros((0, nv)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, dtype=float))
    A_ub = np.zeros((0, nv)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, dtype=float))
    lb = np.zeros(nv) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(nv, np.inf) if ub is None else np.asarray(ub, dtype=float)
    if not np.all(np.isfinite(lb)):
        raise ValueError("solve_lp requires finite lower bounds")
    if np.any(ub - lb < -1e-12):
        return LpResult(status="infeasible")

    m_eq, m_ub = A_eq.shape[0], A_ub.shape[0]
    m = m_eq + m_ub
    n_ss = nv + m_ub                      # structurals + slacks
    A = np.zeros((m, n_ss + m))           # room for one artificial per row
    A[:m_eq, :nv] = A_eq
    A[m_eq:, :nv] = A_ub
    for i in range(m_ub):
        A[m_eq + i, nv + i] = 1.0
    b = np.concatenate([b_eq - A_eq @ lb, b_ub - A_ub @ lb]) if nv else np.concatenate([b_eq, b_ub])
    u = np.concatenate([ub - lb, np.full(m_ub, np.inf), np.full(m, np.inf)])

    # Start: structurals at lower; slack carries a >= 0 residual, else an artificial.
    bas = np.empty(m, dtype=np.int64)
    stat = np.zeros(n_ss + m, dtype=np.int8)
    n_art = 0
    art_cols = []
    for i in range(m):
        if i >= m_eq and b[i] >= 0.0:
            bas[i] = nv + (i - m_eq)
        else:
            col = n_ss + n_art
            A[i, col] = 1.0 if b[i] >= 0.0 else -1.0
            bas[i] = col
            art_cols.append(col)
            n_art += 1
    ncols = n_ss + n_art
    A = A[:, :ncols]
    u = u[:ncols]
    stat = stat[:ncols]
    stat[bas] = 2

    if maxiter is None:
        maxiter = 200 * (ncols + m + 10)

    scale = 1.0 + float(np.max(np.abs(b))) if m else 1.0
    if n_art:
        c1 = np.zeros(ncols)
        c1[art_cols] = 1.0
        status, x, _, _, it1 = lp_core(A, b, c1, u, n_ss, bas, stat, _PIVOT_TOL, maxiter)
        if status != STATUS_OPTIMAL:
            return LpResult(status=_name(status), niter=it1)
        if float(c1 @ x) > _FEAS_TOL * scale:
            return LpResult(status="infeasible", niter=it1)
        _drive_out_artificials(A, bas, stat, n_ss)
        u[art_cols] = 0.0
        stat[[j for j in art_cols if stat[j] != 2]] = 0
    else:
        it1 = 0

    c2 = np.concatenate([c, np.zeros(ncols - nv)])
    status, x, y, d, it2 = lp_core(A, b, c2, u, n_ss, bas, stat, _PIVOT_TOL, maxiter)
    if status != STATUS_OPTIMAL:
        return LpResult(status=_name(status), niter=it1 + it2)

    xs = x[:nv] + lb
    obj = float(c @ xs)
    basic = np.flatnonzero(stat == 2)
    span = np.minimum(x[basic], u[basic] - x[basic])
    dual_degen = bool(np.any(span < _DEG_TOL * (1.0 + np.abs(x[basic])))) or bool(
        np.any(basic >= n_ss)
    )
    nonbasic_ss = [j for j in range(n_ss) if stat[j] != 2]
    alt = bool(np.any(np.abs(d[nonbasic_ss]) < _DEG_TOL * (1.0 + np.abs(c2[nonbasic_ss])))) if nonbasic_ss else False
    return LpResult(
        status="optimal", x=xs, objective=obj,
        y_eq=y[:m_eq].copy(), y_ub=y[m_eq:].copy(),
        dual_degenerate=dual_degen, alt_optima=alt, niter=it1 + it2,
    )


def _drive_out_artificials(A, bas, stat, n_ss):
    """Pivot basic artificials (value ~0 after phase 1) out of the basis where
    a structural/slack column can replace them; redundant rows keep theirs."""
    m = A.shape[0]
    art_rows = [r for r in range(m) if bas[r] >= n_ss]
    if not art_rows:
        return
    B = A[:, bas]
    try:
        Binv = np.linalg.inv(B)
    except np.linalg.LinAlgError:
        return
    for r in art_rows:
        for j in range(n_ss):
            if stat[j] == 2:
                continue
            if abs(Binv[r] @ A[:, j]) > 1e-7:
                stat[bas[r]] = 0
                bas[r] = j
                stat[j] = 2
                B = A[:, bas]
                try:
                    Binv = np.linalg.inv(B)
                except np.linalg.LinAlgError:
                    return
                break


def _name(status: int) -> str:
    return {
        STATUS_OPTIMAL: "optimal",
        STATUS_UNBOUNDED: "unbounded",
        STATUS_MAXITER: "maxiter",
        STATUS_SINGULAR: "singular",
    }[status]
