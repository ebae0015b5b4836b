"""Pure-Python bounded-variable primal simplex kernel.

Same contract as the compiled kernel in _simplex_c.pyx; used as the fallback
when the extension is unavailable (or LMPSIM_PURE_PYTHON=1). The basis is
refactorized every iteration (problems here are tiny), entering/leaving
choices follow Bland's smallest-index rule, so runs are deterministic.
"""

import numpy as np

STATUS_OPTIMAL = 0
STATUS_UNBOUNDED = 1
STATUS_MAXITER = 2
STATUS_SINGULAR = 3


def lp_core(A, b, c, u, n_enter, bas, stat, tol, maxiter):
    """Run the simplex loop from a starting basis.

    A (m,n), b (m,), c (n,), u (n,) upper bounds with lower bounds fixed at 0
    (np.inf allowed in u). Only columns j < n_enter may enter the basis.
    `bas` (m, int64) and `stat` (n, int8; 0 at-lower / 1 at-upper / 2 basic)
    are mutated in place. Returns (status, x, y, d, niter).
    """
    m, n = A.shape
    niter = 0
    while True:
        B = A[:, bas]
        try:
            up = np.flatnonzero(stat == 1)
            r = b - A[:, up] @ u[up] if up.size else b.copy()
            xb = np.linalg.solve(B, r)
            y = np.linalg.solve(B.T, c[bas])
        except np.linalg.LinAlgError:
            return STATUS_SINGULAR, None, None, None, niter

        d = c - y @ A
        enter = -1
        for j in range(n_enter):
            sj = stat[j]
            if sj == 2:
                continue
            if (sj == 0 and d[j] < -tol) or (sj == 1 and d[j] > tol):
                enter = j
                break
        if enter < 0:
            x = np.where(stat == 1, u, 0.0)
            x[bas] = xb
            return STATUS_OPTIMAL, x, y, d, niter

        if niter >= maxiter:
            return STATUS_MAXITER, None, None, None, niter
        niter += 1

        w = np.linalg.solve(B, A[:, enter])
        sigma = 1.0 if stat[enter] == 0 else -1.0

        # Ratio test: smallest step, ties broken by smallest variable index
        # (the entering variable's own bound span competes as a bound flip).
        best_t = u[enter] if np.isfinite(u[enter]) else np.inf
        best_var = enter
        best_row = -1
        for i in range(m):
            coef = sigma * w[i]
            if coef > tol:
                ti = xb[i] / coef
                hit_upper = False
            elif coef < -tol:
                ui = u[bas[i]]
                if not np.isfinite(ui):
                    continue
                ti = (ui - xb[i]) / (-coef)
                hit_upper = True
            else:
                continue
            if ti < 0.0:
                ti = 0.0
            tie = tol * (1.0 + abs(best_t)) if np.isfinite(best_t) else 0.0
            if ti < best_t - tie or (ti <= best_t + tie and bas[i] < best_var):
                best_t = ti
                best_var = bas[i]
                best_row = i
                best_hit_upper = hit_upper

        if not np.isfinite(best_t):
            return STATUS_UNBOUNDED, None, None, None, niter

        if best_row < 0:
            stat[enter] = 1 - stat[enter]  # bound flip
            continue
        leaving = bas[best_row]
        stat[leaving] = 1 if best_hit_upper else 0
        bas[best_row] = enter
        stat[enter] = 2
