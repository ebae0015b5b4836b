"""Log-barrier interior-point solver for the worst-attack programs.

Handles the two shapes the attack modules need:

  * maximize a margin variable under linear pattern constraints plus one
    convex quadratic budget (residual energy of the attack), and
  * minimize a convex quadratic under linear constraints (fully adaptive
    attacks), feasibility being "minimum below the detector threshold".

Problems are tiny (a few dozen variables) but solved tens of thousands of
times per Monte Carlo run, so the inner loops avoid re-evaluating
constraints: along a Newton ray every linear constraint is affine in the
step and every quadratic one is a parabola, so backtracking works on
precomputed coefficients. Phase 1 minimizes the worst scaled violation and
certifies strict feasibility before the main barrier runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MU = 30.0
_GAP_TOL = 1e-8
_NEWTON_TOL = 1e-10
_MAX_NEWTON = 60
_MAX_OUTER = 40
_RIDGE = 1e-12


@dataclass
class ConvexProgram:
    """min 1/2 v'Pv + q'v  s.t.  G v <= h  and  v'Q v + r'v + s <= 0 per quad."""
    P: np.ndarray | None
    q: np.ndarray
    G: np.ndarray
    h: np.ndarray
    quads: list[tuple[np.ndarray, np.ndarray, float]] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.q.size

    @property
    def n_constraints(self) -> int:
        return self.h.size + len(self.quads)

    def objective(self, v):
        val = float(self.q @ v)
        if self.P is not None:
            val += 0.5 * float(v @ self.P @ v)
        return val

    def constraint_values(self, v) -> np.ndarray:
        lin = self.G @ v - self.h if self.h.size else np.zeros(0)
        if not self.quads:
            return lin
        qv = np.array([float(v @ Q @ v + r @ v + s) for Q, r, s in self.quads])
        return np.concatenate([lin, qv])


@dataclass
class BarrierResult:
    feasible: bool
    v: np.ndarray | None = None
    objective: float | None = None
    phase1_margin: float | None = None  # optimal worst violation; negative = strict interior
    objective_bound: float = -np.inf    # certified lower bound on the optimum


def solve_convex(prog: ConvexProgram, v_hint=None, gap_tol=_GAP_TOL,
                 abort_above: float | None = None,
                 strict_start: np.ndarray | None = None) -> BarrierResult:
    """abort_above: stop early once the duality-gap lower bound
    objective(v) - m/bt proves the minimum exceeds this value; the result then
    carries objective_bound > abort_above with v at the last iterate.
    strict_start: a point already strictly inside every constraint (phase 1
    is skipped when it checks out)."""
    if strict_start is not None and np.all(prog.constraint_values(strict_start) < 0.0):
        v0, margin = np.asarray(strict_start, dtype=float).copy(), None
    else:
        v0, margin = _phase1(prog, v_hint)
        if v0 is None:
            return BarrierResult(feasible=False, phase1_margin=margin)
    v, bound = _central_path(prog, v0, gap_tol, abort_above)
    res = BarrierResult(feasible=True, v=v, objective=prog.objective(v), phase1_margin=margin)
    res.objective_bound = bound
    return res


def _ray_coeffs(prog: ConvexProgram, v, d):
    """Constraint values along v + t d as (const, linear, quadratic) arrays."""
    nlin = prog.h.size
    nq = len(prog.quads)
    c0 = np.empty(nlin + nq)
    c1 = np.empty(nlin + nq)
    c2 = np.zeros(nlin + nq)
    if nlin:
        c0[:nlin] = prog.G @ v - prog.h
        c1[:nlin] = prog.G @ d
    for i, (Q, r, s) in enumerate(prog.quads):
        Qv = Q @ v
        c0[nlin + i] = float(v @ Qv + r @ v + s)
        c1[nlin + i] = float(2.0 * d @ Qv + r @ d)
        c2[nlin + i] = float(d @ Q @ d)
    return c0, c1, c2


def _phase1(prog: ConvexProgram, v_hint=None, margin_stop=1e-7):
    """Minimize the worst scaled violation t over (v, t); success when a
    strictly interior point (t < 0) is certified. The barrier problem is
    min bt*t - sum log(t*s_i - g_i(v))."""
    n = prog.dim
    scale = np.concatenate([
        1.0 + np.abs(prog.h) if prog.h.size else np.zeros(0),
        np.array([1.0 + abs(s) for _, _, s in prog.quads]),
    ])
    v = np.zeros(n) if v_hint is None else np.asarray(v_hint, dtype=float).copy()
    t = float(np.max(prog.constraint_values(v) / scale)) + 1.0

    bt = 1.0
    best_v, best_margin = None, np.inf
    prev_t = np.inf
    for _ in range(_MAX_OUTER):
        v, t = _newton_phase1(prog, v, t, bt, scale)
        if t < best_margin:
            best_margin, best_v = t, v.copy()
        if t < -margin_stop:
            return best_v, best_margin
        if prog.n_constraints / bt < 1e-9:
            break
        if abs(prev_t - t) <= 1e-8 * (1.0 + abs(t)) and t > margin_stop:
            break  # converged to a positive violation: infeasible, stop polishing
        prev_t = t
        bt *= _MU
    if best_margin < -1e-9:
        return best_v, best_margin
    return None, best_margin


def _newton_phase1(prog, v, t, bt, scale):
    n = prog.dim
    nlin = prog.h.size
    for _ in range(_MAX_NEWTON):
        vals = prog.constraint_values(v)
        slack = t * scale - vals
        if np.any(slack <= 0):
            t = float(np.max(vals / scale)) + 1e-9 * (1.0 + abs(t))
            slack = t * scale - vals
        inv = 1.0 / slack
        inv2 = inv * inv

        grad_v = np.zeros(n)
        hess_vv = np.zeros((n, n))
        hess_vt = np.zeros(n)
        if nlin:
            gl = prog.G * inv[:nlin, None]
            grad_v += gl.sum(axis=0)
            hess_vv += gl.T @ gl
            hess_vt -= (prog.G * (inv2[:nlin] * scale[:nlin])[:, None]).sum(axis=0)
        for qi, (Q, r, s) in enumerate(prog.quads):
            i = nlin + qi
            gq = 2.0 * Q @ v + r
            grad_v += gq * inv[i]
            hess_vv += np.outer(gq, gq) * inv2[i] + 2.0 * Q * inv[i]
            hess_vt -= gq * inv2[i] * scale[i]
        grad_t = bt - float(scale @ inv)
        hess_tt = float(scale @ (scale * inv2))

        g = np.concatenate([grad_v, [grad_t]])
        Hm = np.empty((n + 1, n + 1))
        Hm[:n, :n] = hess_vv
        Hm[:n, n] = hess_vt
        Hm[n, :n] = hess_vt
        Hm[n, n] = hess_tt
        Hm[np.diag_indices(n + 1)] += _RIDGE * (1.0 + abs(np.trace(Hm)) / (n + 1))
        try:
            step = np.linalg.solve(Hm, -g)
        except np.linalg.LinAlgError:
            Hm[np.diag_indices(n + 1)] += 1e-6
            step = np.linalg.solve(Hm, -g)
        dec = float(-g @ step)
        if dec / 2.0 <= _NEWTON_TOL * (1.0 + bt):
            break

        dv, dt = step[:n], step[n]
        c0, c1, c2 = _ray_coeffs(prog, v, dv)
        # slack(alpha) = (t + alpha dt) scale - (c0 + alpha c1 + alpha^2 c2)
        s0 = t * scale - c0
        s1 = dt * scale - c1
        phi0 = bt * t - float(np.log(s0).sum())
        alpha = 1.0
        accepted = False
        for _ in range(60):
            sl = s0 + alpha * s1 - alpha * alpha * c2
            if np.all(sl > 0):
                phi = bt * (t + alpha * dt) - float(np.log(sl).sum())
                if phi <= phi0 - 0.25 * alpha * dec or alpha < 1e-12:
                    vn = v + alpha * dv
                    tn = t + alpha * dt
                    if np.all(prog.constraint_values(vn) < tn * scale):  # exact check
                        v, t = vn, tn
                        accepted = True
                        break
            alpha *= 0.5
        if not accepted:
            break
    return v, t


def _central_path(prog: ConvexProgram, v0, gap_tol, abort_above=None):
    v = v0.copy()
    bt = max(1.0, prog.n_constraints / max(1.0, abs(prog.objective(v0))))
    bound = -np.inf
    for _ in range(_MAX_OUTER):
        v, converged = _newton_center(prog, v, bt)
        gap = prog.n_constraints / bt
        if converged:
            # duality-gap bound is only trustworthy at a centered point
            bound = max(bound, prog.objective(v) - gap)
        if abort_above is not None and bound > abort_above:
            break
        if gap < gap_tol:
            break
        bt *= _MU
    return v, bound


def _newton_center(prog: ConvexProgram, v, bt):
    n = prog.dim
    nlin = prog.h.size
    v_prev = v.copy()
    converged = False
    for _ in range(_MAX_NEWTON):
        slack = -prog.constraint_values(v)
        if np.any(slack <= 0.0):
            return v_prev, converged  # numerical boundary violation: fall back
        v_prev = v.copy()
        inv = 1.0 / slack
        inv2 = inv * inv

        grad = bt * (prog.q + (prog.P @ v if prog.P is not None else 0.0))
        hess = bt * prog.P.copy() if prog.P is not None else np.zeros((n, n))
        if nlin:
            gl = prog.G * inv[:nlin, None]
            grad = grad + gl.sum(axis=0)
            hess = hess + gl.T @ gl
        for qi, (Q, r, s) in enumerate(prog.quads):
            i = nlin + qi
            gq = 2.0 * Q @ v + r
            grad = grad + gq * inv[i]
            hess = hess + np.outer(gq, gq) * inv2[i] + 2.0 * Q * inv[i]

        hess[np.diag_indices(n)] += _RIDGE * (1.0 + abs(np.trace(hess)) / n)
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            hess[np.diag_indices(n)] += 1e-6
            step = np.linalg.solve(hess, -grad)
        dec = float(-grad @ step)
        if dec / 2.0 <= _NEWTON_TOL * (1.0 + bt):
            converged = True
            break

        # objective along the ray: quadratic in alpha
        f0 = prog.objective(v)
        fd1 = float(prog.q @ step)
        fd2 = 0.0
        if prog.P is not None:
            Pstep = prog.P @ step
            fd1 += float(v @ Pstep)
            fd2 = 0.5 * float(step @ Pstep)
        c0, c1, c2 = _ray_coeffs(prog, v, step)
        s0, s1 = -c0, -c1
        phi0 = bt * f0 - float(np.log(np.maximum(s0, 1e-300)).sum())
        alpha = 1.0
        accepted = False
        for _ in range(60):
            sl = s0 + alpha * s1 - alpha * alpha * c2
            if np.all(sl > 0):
                phi = bt * (f0 + alpha * fd1 + alpha * alpha * fd2) - float(np.log(sl).sum())
                if phi <= phi0 - 0.25 * alpha * dec or alpha < 1e-12:
                    vn = v + alpha * step
                    if np.all(prog.constraint_values(vn) < 0.0):  # exact check
                        v = vn
                        accepted = True
                        break
            alpha *= 0.5
        if not accepted:
            converged = True  # no further progress possible at this weight
            break
    return v, converged
