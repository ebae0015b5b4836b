"""Worst-case meter-data attacks.

Three adversary classes, by what they can see:

  m1  state independent: designs against the state prior only;
  m2  partially adaptive: observes a subset of meters and anchors on the
      conditional (MMSE) state estimate;
  m3  fully adaptive: sees the whole measurement vector, so the post-attack
      estimate is deterministic.

m1/m2 center the expected estimate inside a target price region (maximize the
margin to every region boundary) under a residual-energy budget a'Wa <= eps;
m3 needs any attack meeting the region inequalities while the detector
statistic stays under the threshold, found by minimizing the statistic
subject to those inequalities. The search over candidate regions is either
exhaustive or a greedy single-line-flip ascent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cases import StatePrior
from ..errors import EstimationError
from ..estimation import operators
from ..network import DcModel
from ..pricing import RPP_EXCLUDE_TOL, PriceTable
from ..regions import DELTA_STRICT_MW, region_of_state
from ..solvers.barrier import ConvexProgram, solve_convex
from ..solvers.simplex import solve_lp

A_MAX_PU = 100.0      # numerical guard box on attack entries (p.u.)
BETA_MAX_PU = 100.0   # numerical guard on the centering margin


@dataclass(frozen=True)
class SuspectSpace:
    """Meters the adversary can corrupt; attack vectors vanish elsewhere."""
    indices: tuple[int, ...]

    @staticmethod
    def from_meters(suspects) -> "SuspectSpace":
        return SuspectSpace(indices=tuple(sorted(int(i) for i in set(suspects))))

    @property
    def k(self) -> int:
        return len(self.indices)

    def embed(self, a_s: np.ndarray, m: int) -> np.ndarray:
        a = np.zeros(m)
        a[list(self.indices)] = a_s
        return a


@dataclass
class MeterAttackPlan:
    tag: str                      # m1 | m2 | m3
    a: np.ndarray                 # m-vector, p.u., zero off the suspect set
    pattern: frozenset[int]       # target congestion pattern
    beta_mw: float                # achieved centering margin (m1/m2; 0 for m3)
    budget: float                 # eps (m1/m2) or tau (m3)
    predicted_arpp: float
    feasible: bool
    evaluations: int = 0          # candidate-pattern programs solved

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "a": self.a.tolist(),
            "pattern": sorted(self.pattern),
            "beta_mw": self.beta_mw,
            "budget": self.budget,
            "predicted_arpp": self.predicted_arpp,
            "feasible": self.feasible,
            "evaluations": self.evaluations,
        }


def mmse_state(prior: StatePrior, H0: np.ndarray, z0: np.ndarray,
               obs_noise_cov: np.ndarray | None = None) -> np.ndarray:
    """Conditional mean of the state given a subset of (noisy) measurements.

    obs_noise_cov is the observed meters' noise covariance; without it the
    innovation matrix is singular whenever the observed set is redundant.
    For an invertible prior the algebraically identical information form is
    used (much better conditioned when the prior is nearly flat)."""
    H0 = np.atleast_2d(np.asarray(H0, dtype=float))
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    if H0.shape[0] == 0:
        return prior.mean.copy()
    innov = z0 - H0 @ prior.mean
    if obs_noise_cov is not None:
        try:
            prior_info = np.linalg.inv(prior.covariance)
            R0_inv = np.linalg.inv(obs_noise_cov)
            P = prior_info + H0.T @ R0_inv @ H0
            return prior.mean + np.linalg.solve(P, H0.T @ (R0_inv @ innov))
        except np.linalg.LinAlgError:
            pass  # singular prior: fall through to the covariance form
    S = H0 @ prior.covariance @ H0.T
    if obs_noise_cov is not None:
        S = S + obs_noise_cov
    try:
        gain = prior.covariance @ H0.T @ np.linalg.inv(S)
    except np.linalg.LinAlgError as e:
        raise EstimationError("MMSE innovation matrix is singular") from e
    return prior.mean + gain @ innov


@dataclass
class CenterAttackResult:
    feasible: bool
    a: np.ndarray | None = None       # m-vector, p.u.
    beta_mw: float = 0.0


def _pattern_rows(model: DcModel, pattern):
    """(rows, limits, congested?) for every limited closed branch."""
    out = []
    for kid in model.limited_branch_ids:
        r = model.branch_row(kid)
        out.append((r, model.limits_pu[r], kid in pattern))
    return out


def center_attack(model: DcModel, pattern, anchor_x: np.ndarray,
                  suspects: SuspectSpace, epsilon: float) -> CenterAttackResult:
    """Maximize the expected-estimate margin beta inside the target region,
    subject to the attack-energy budget a'Wa <= eps on the suspect meters."""
    pattern = frozenset(int(k) for k in pattern)
    rows = _pattern_rows(model, pattern)
    base = model.case.base_mva
    f0 = model.F @ np.asarray(anchor_x, dtype=float)
    delta = DELTA_STRICT_MW / base

    if not rows:
        return CenterAttackResult(feasible=True, a=np.zeros(model.m), beta_mw=float("inf"))

    if suspects.k == 0 or epsilon <= 0.0:
        beta = np.inf
        for r, T, congested in rows:
            gap = (f0[r] - T) if congested else (T - delta - f0[r])
            beta = min(beta, gap)
        if beta < 0.0:
            return CenterAttackResult(feasible=False)
        return CenterAttackResult(feasible=True, a=np.zeros(model.m), beta_mw=float(beta * base))

    ops = operators(model)
    S = list(suspects.indices)
    Gs = (model.F @ ops.K)[:, S]
    Wss = ops.W[np.ix_(S, S)]
    k = suspects.k

    # fast necessary condition: the pattern must be linearly reachable at all
    G_lin, h_lin = [], []
    for r, T, congested in rows:
        if congested:
            G_lin.append(-Gs[r])
            h_lin.append(f0[r] - T)
        else:
            G_lin.append(Gs[r].copy())
            h_lin.append(T - delta - f0[r])
    if _linear_phase1(np.array(G_lin), np.array(h_lin), k) is None:
        return CenterAttackResult(feasible=False)

    # variables v = (a_S, beta); maximize beta
    G_rows, h = [], []
    for r, T, congested in rows:
        if congested:
            G_rows.append(np.concatenate([-Gs[r], [1.0]]))
            h.append(f0[r] - T)
        else:
            G_rows.append(np.concatenate([Gs[r], [1.0]]))
            h.append(T - delta - f0[r])
    G_rows.append(np.concatenate([np.zeros(k), [-1.0]]))  # beta >= 0
    h.append(0.0)
    G_rows.append(np.concatenate([np.zeros(k), [1.0]]))   # beta guard
    h.append(BETA_MAX_PU)

    Q = np.zeros((k + 1, k + 1))
    Q[:k, :k] = Wss
    Qguard = np.zeros((k + 1, k + 1))                     # ‖a‖ guard (null-space drift)
    Qguard[:k, :k] = np.eye(k)
    prog = ConvexProgram(
        P=None,
        q=np.concatenate([np.zeros(k), [-1.0]]),
        G=np.array(G_rows),
        h=np.array(h),
        quads=[(Q, np.zeros(k + 1), -float(epsilon)),
               (Qguard, np.zeros(k + 1), -float(k) * A_MAX_PU**2)],
    )
    res = solve_convex(prog)
    if not res.feasible:
        return CenterAttackResult(feasible=False)
    a = suspects.embed(res.v[:k], model.m)
    return CenterAttackResult(feasible=True, a=a, beta_mw=float(res.v[k] * base))


@dataclass
class M3AttackResult:
    feasible: bool
    a: np.ndarray | None = None
    statistic: float = float("nan")   # minimum achievable z'Wz over the region


def _linear_phase1(G: np.ndarray, h: np.ndarray, k: int, margin: float = 1e-7):
    """Strictly feasible point for G a <= h inside the guard box, found with
    the simplex (min worst violation); None when no such point exists."""
    if G.shape[0] == 0:
        return np.zeros(k)
    c = np.zeros(k + 1)
    c[-1] = 1.0
    A_ub = np.concatenate([G, -np.ones((G.shape[0], 1))], axis=1)
    lb = np.concatenate([np.full(k, -0.99 * A_MAX_PU), [-1e9]])
    ub = np.concatenate([np.full(k, 0.99 * A_MAX_PU), [1e9]])
    res = solve_lp(c, A_ub=A_ub, b_ub=h, lb=lb, ub=ub)
    if not res.ok or res.x[-1] > -margin:
        return None
    a0 = res.x[:k].copy()
    # pull the vertex back toward the origin along its feasible segment
    # (extreme starts slow the barrier): smallest t in [0,1] keeping margins
    ga = G @ a0
    viol = h - margin                      # need t*ga <= viol for t in [0, 1]
    t_lo = 0.0
    for gi, vi in zip(ga, viol):
        if gi < 0 and vi / gi > t_lo:
            t_lo = vi / gi                 # rows that need a to stay large
    t = min(max(t_lo, 0.0), 1.0)
    cand = t * a0
    if np.all(G @ cand <= h - margin * 0.5):
        return cand
    return a0


def m3_attack(model: DcModel, z: np.ndarray, pattern, suspects: SuspectSpace,
              tau: float, early_abort: bool = True) -> M3AttackResult:
    """Fully adaptive attack: meet the target region inequalities on the
    deterministic post-attack estimate while (z+a)'W(z+a) <= tau. Implemented
    by minimizing the statistic over the region; feasible iff the minimum is
    within the threshold."""
    pattern = frozenset(int(k) for k in pattern)
    z = np.asarray(z, dtype=float)
    rows = _pattern_rows(model, pattern)
    ops = operators(model)
    base_stat = float(z @ ops.W @ z)
    delta = DELTA_STRICT_MW / model.case.base_mva

    if suspects.k == 0:
        f = model.F @ (ops.K @ z)
        ok = all((f[r] >= T) if congested else (f[r] <= T - delta) for r, T, congested in rows)
        if ok and base_stat <= tau:
            return M3AttackResult(feasible=True, a=np.zeros(model.m), statistic=base_stat)
        return M3AttackResult(feasible=False, statistic=base_stat)

    S = list(suspects.indices)
    Gs = (model.F @ ops.K)[:, S]
    Wss = ops.W[np.ix_(S, S)]
    wz = (ops.W @ z)[S]
    fz = model.F @ (ops.K @ z)
    k = suspects.k

    G_rows, h = [], []
    for r, T, congested in rows:
        if congested:
            G_rows.append(-Gs[r])
            h.append(fz[r] - T)
        else:
            G_rows.append(Gs[r].copy())
            h.append(T - delta - fz[r])
    G = np.array(G_rows) if G_rows else np.zeros((0, k))
    h = np.array(h)
    start = _linear_phase1(G, h, k)
    if start is None:
        return M3AttackResult(feasible=False)
    prog = ConvexProgram(
        P=2.0 * Wss,
        q=2.0 * wz,
        G=G,
        h=h,
        quads=[(np.eye(k), np.zeros(k), -float(k) * A_MAX_PU**2)],
    )
    abort = (tau - base_stat + 1e-6) if early_abort else None
    res = solve_convex(prog, abort_above=abort, strict_start=start)
    if not res.feasible:
        return M3AttackResult(feasible=False)
    a = suspects.embed(res.v, model.m)
    if early_abort and res.objective_bound + base_stat > tau + 1e-8:
        # certified: no attack in this region stays under the threshold
        return M3AttackResult(feasible=False, a=a, statistic=float(res.objective_bound + base_stat))
    qmin = res.objective + base_stat
    if qmin <= tau + 1e-8:
        return M3AttackResult(feasible=True, a=a, statistic=float(qmin))
    return M3AttackResult(feasible=False, a=a, statistic=float(qmin))


# ---------------------------------------------------------------------------
# Search over candidate patterns
# ---------------------------------------------------------------------------

def predicted_perturbation(lam_anchor: np.ndarray, lam_target: np.ndarray) -> float:
    """Per-bus mean of |anchor - target| / |anchor|, skipping tiny anchors."""
    lam_anchor = np.asarray(lam_anchor, dtype=float)
    valid = np.abs(lam_anchor) >= RPP_EXCLUDE_TOL
    if not np.any(valid):
        return 0.0
    rel = np.abs(lam_target[valid] - lam_anchor[valid]) / np.abs(lam_anchor[valid])
    return float(np.mean(rel))


def worst_meter_attack(model: DcModel, price_table: PriceTable, tag: str,
                       suspects: SuspectSpace, candidates, *,
                       anchor_x: np.ndarray | None = None,
                       z: np.ndarray | None = None,
                       epsilon: float | None = None,
                       tau: float | None = None,
                       search: str = "exhaustive") -> MeterAttackPlan:
    """Pick the candidate congestion pattern with the largest predicted price
    perturbation among those an attack can realize, and return that attack."""
    if tag in ("m1", "m2"):
        if anchor_x is None or epsilon is None:
            raise ValueError(f"{tag} needs anchor_x and epsilon")
        budget = float(epsilon)
        anchor = np.asarray(anchor_x, dtype=float)
    elif tag == "m3":
        if z is None or tau is None:
            raise ValueError("m3 needs z and tau")
        budget = float(tau)
        ops = operators(model)
        anchor = ops.K @ np.asarray(z, dtype=float)
    else:
        raise ValueError(f"unknown attack model tag {tag!r}")

    candidates = [frozenset(c) for c in candidates]
    if not candidates:
        raise ValueError("candidate pattern list is empty")
    anchor_pattern = region_of_state(model, anchor)
    lam0 = price_table.price(anchor_pattern)

    zero_plan = MeterAttackPlan(tag=tag, a=np.zeros(model.m), pattern=anchor_pattern,
                                beta_mw=0.0, budget=budget, predicted_arpp=0.0,
                                feasible=False)
    if lam0 is None:
        return zero_plan

    evals = 0
    obj_cache: dict[frozenset[int], float | None] = {}
    attack_cache: dict[frozenset[int], tuple | None] = {}

    def objective(pat):
        """Predicted perturbation; None when the pattern is unpriced. Cheap:
        prices depend only on the pattern and are table-cached."""
        if pat not in obj_cache:
            lam = price_table.price(pat)
            obj_cache[pat] = None if lam is None else predicted_perturbation(lam0.lmp, lam.lmp)
        return obj_cache[pat]

    def realizable(pat):
        """Solve the attack program for the pattern: (a, beta) or None."""
        nonlocal evals
        if pat not in attack_cache:
            evals += 1
            if tag == "m3":
                r = m3_attack(model, z, pat, suspects, tau)
                attack_cache[pat] = (r.a, 0.0) if r.feasible else None
            else:
                r = center_attack(model, pat, anchor, suspects, epsilon)
                attack_cache[pat] = (r.a, r.beta_mw) if r.feasible else None
        return attack_cache[pat]

    if search == "exhaustive":
        found = exhaustive_search(candidates, objective, realizable)
    elif search == "greedy":
        found = greedy_flip_search(candidates, anchor_pattern, objective, realizable)
    else:
        raise ValueError(f"unknown search method {search!r}")
    if found is None:
        zero_plan.evaluations = evals
        return zero_plan
    obj, pat, (a, beta) = found
    if obj <= 1e-12:
        # no candidate improves on the anchor's own prices: attacking buys nothing
        zero_plan.feasible = True
        zero_plan.evaluations = evals
        return zero_plan
    return MeterAttackPlan(tag=tag, a=a, pattern=pat, beta_mw=beta, budget=budget,
                           predicted_arpp=float(obj), feasible=True, evaluations=evals)


def exhaustive_search(candidates, objective, realizable):
    """Argmax of the objective over candidate patterns subject to the attack
    being realizable. The objective is independent of the attack vector, so
    patterns are ranked first and the expensive realizability program runs
    lazily down the ranking; ties go to the lowest pattern in canonical
    (sorted-id) order."""
    ranked = []
    for pat in sorted({frozenset(c) for c in candidates}, key=lambda p: tuple(sorted(p))):
        obj = objective(pat)
        if obj is not None:
            ranked.append((obj, pat))
    ranked.sort(key=lambda t: (-t[0], tuple(sorted(t[1]))))
    for obj, pat in ranked:
        payload = realizable(pat)
        if payload is not None:
            return obj, pat, payload
    return None


def greedy_flip_search(candidates, start_pattern, objective, realizable):
    """Local ascent flipping one candidate line at a time: accept the best
    improving realizable flip (objective ties to the lowest branch id), stop
    at a local optimum. Realizability is checked lazily in objective order."""
    candidates = {frozenset(c) for c in candidates}
    always = frozenset.intersection(*candidates)
    flip_lines = sorted(frozenset.union(*candidates) - always)
    current = start_pattern if start_pattern in candidates else min(
        candidates, key=lambda p: (len(p.symmetric_difference(start_pattern)), tuple(sorted(p)))
    )
    best = None
    best_obj = -np.inf
    cur_obj = objective(current)
    if cur_obj is not None:
        payload = realizable(current)
        if payload is not None:
            best = (cur_obj, current, payload)
            best_obj = cur_obj
    improved = True
    while improved:
        improved = False
        flips = []
        for line in flip_lines:
            pat = current ^ frozenset([line])
            if pat not in candidates:
                continue
            obj = objective(pat)
            if obj is not None and obj > best_obj + 1e-12:
                flips.append((obj, line, pat))
        flips.sort(key=lambda t: (-t[0], t[1]))
        for obj, _, pat in flips:
            payload = realizable(pat)
            if payload is not None:
                best = (obj, pat, payload)
                best_obj = obj
                current = pat
                improved = True
                break
    return best
