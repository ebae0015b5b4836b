# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled bounded-variable primal simplex kernel.

Same contract and pivot rules as the pure fallback in _simplex_py (Bland's
smallest-index entering/leaving, basis refactorized every iteration); the
dense LU factorization and substitution run as C loops. Results agree with
the fallback to floating-point roundoff, not bit-for-bit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, isfinite

STATUS_OPTIMAL = 0
STATUS_UNBOUNDED = 1
STATUS_MAXITER = 2
STATUS_SINGULAR = 3


cdef int _lu_factor(double[:, ::1] M, int[::1] piv, int m) nogil:
    """In-place LU with partial pivoting; returns 0, or -1 if singular."""
    cdef int k, i, j, p
    cdef double best, v, f
    for k in range(m):
        best = fabs(M[k, k])
        p = k
        for i in range(k + 1, m):
            v = fabs(M[i, k])
            if v > best:
                best = v
                p = i
        if best < 1e-13:
            return -1
        piv[k] = p
        if p != k:
            for j in range(m):
                v = M[k, j]
                M[k, j] = M[p, j]
                M[p, j] = v
        for i in range(k + 1, m):
            f = M[i, k] / M[k, k]
            M[i, k] = f
            for j in range(k + 1, m):
                M[i, j] -= f * M[k, j]
    return 0


cdef void _lu_solve(double[:, ::1] M, int[::1] piv, double[::1] rhs, int m) nogil:
    """Solve B x = rhs in place using the factorization of B."""
    cdef int k, i
    cdef double acc
    for k in range(m):
        if piv[k] != k:
            acc = rhs[k]
            rhs[k] = rhs[piv[k]]
            rhs[piv[k]] = acc
    for k in range(m):        # L (unit lower)
        acc = rhs[k]
        for i in range(k):
            acc -= M[k, i] * rhs[i]
        rhs[k] = acc
    for k in range(m - 1, -1, -1):  # U
        acc = rhs[k]
        for i in range(k + 1, m):
            acc -= M[k, i] * rhs[i]
        rhs[k] = acc / M[k, k]


cdef void _lu_solve_t(double[:, ::1] M, int[::1] piv, double[::1] rhs, int m) nogil:
    """Solve B' y = rhs in place (B = P' L U  =>  B' = U' L' P)."""
    cdef int k, i
    cdef double acc
    for k in range(m):        # U' (lower with U's diagonal)
        acc = rhs[k]
        for i in range(k):
            acc -= M[i, k] * rhs[i]
        rhs[k] = acc / M[k, k]
    for k in range(m - 1, -1, -1):  # L' (unit upper)
        acc = rhs[k]
        for i in range(k + 1, m):
            acc -= M[i, k] * rhs[i]
        rhs[k] = acc
    for k in range(m - 1, -1, -1):  # undo row swaps
        if piv[k] != k:
            acc = rhs[k]
            rhs[k] = rhs[piv[k]]
            rhs[piv[k]] = acc


def lp_core(A_in, b_in, c_in, u_in, n_enter, bas_in, stat_in, tol, maxiter):
    """Identical interface to _simplex_py.lp_core."""
    cdef double[:, ::1] A = np.ascontiguousarray(A_in, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef double[::1] c = np.ascontiguousarray(c_in, dtype=np.float64)
    cdef double[::1] u = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef long[::1] bas = bas_in
    cdef signed char[::1] stat = stat_in
    cdef int m = A.shape[0]
    cdef int n = A.shape[1]
    cdef int nent = int(n_enter)
    cdef double eps = float(tol)
    cdef long itmax = int(maxiter)

    cdef double[:, ::1] B = np.empty((m, m))
    cdef int[::1] piv = np.empty(m, dtype=np.intc)
    cdef double[::1] xb = np.empty(m)
    cdef double[::1] y = np.empty(m)
    cdef double[::1] w = np.empty(m)

    cdef long niter = 0
    cdef int i, j, k, enter, best_row
    cdef long best_var, leaving
    cdef double sigma, coef, ti, best_t, tie, dj, acc, ui
    cdef bint best_hit_upper = False, hit_upper

    while True:
        for i in range(m):
            for j in range(m):
                B[i, j] = A[i, bas[j]]
        if _lu_factor(B, piv, m) != 0:
            return STATUS_SINGULAR, None, None, None, niter

        for i in range(m):
            acc = b[i]
            for j in range(n):
                if stat[j] == 1:
                    acc -= A[i, j] * u[j]
            xb[i] = acc
        _lu_solve(B, piv, xb, m)

        for i in range(m):
            y[i] = c[bas[i]]
        _lu_solve_t(B, piv, y, m)

        enter = -1
        for j in range(nent):
            if stat[j] == 2:
                continue
            acc = c[j]
            for i in range(m):
                acc -= y[i] * A[i, j]
            dj = acc
            if (stat[j] == 0 and dj < -eps) or (stat[j] == 1 and dj > eps):
                enter = j
                break
        if enter < 0:
            x_out = np.zeros(n)
            d_out = np.empty(n)
            for j in range(n):
                if stat[j] == 1:
                    x_out[j] = u[j]
                acc = c[j]
                for i in range(m):
                    acc -= y[i] * A[i, j]
                d_out[j] = acc
            for i in range(m):
                x_out[bas[i]] = xb[i]
            return STATUS_OPTIMAL, x_out, np.asarray(y).copy(), d_out, niter

        if niter >= itmax:
            return STATUS_MAXITER, None, None, None, niter
        niter += 1

        for i in range(m):
            w[i] = A[i, enter]
        _lu_solve(B, piv, w, m)
        sigma = 1.0 if stat[enter] == 0 else -1.0

        best_t = u[enter] if isfinite(u[enter]) else INFINITY
        best_var = enter
        best_row = -1
        for i in range(m):
            coef = sigma * w[i]
            if coef > eps:
                ti = xb[i] / coef
                hit_upper = False
            elif coef < -eps:
                ui = u[bas[i]]
                if not isfinite(ui):
                    continue
                ti = (ui - xb[i]) / (-coef)
                hit_upper = True
            else:
                continue
            if ti < 0.0:
                ti = 0.0
            tie = eps * (1.0 + fabs(best_t)) if isfinite(best_t) else 0.0
            if ti < best_t - tie or (ti <= best_t + tie and bas[i] < best_var):
                best_t = ti
                best_var = bas[i]
                best_row = i
                best_hit_upper = hit_upper

        if not isfinite(best_t):
            return STATUS_UNBOUNDED, None, None, None, niter

        if best_row < 0:
            stat[enter] = 1 - stat[enter]
            continue
        leaving = bas[best_row]
        stat[leaving] = 1 if best_hit_upper else 0
        bas[best_row] = enter
        stat[enter] = 2
