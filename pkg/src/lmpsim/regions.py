"""Price regions: the state space decomposes into polytopes on which the
congestion pattern (and hence the LMP vector) is constant.

A region is the intersection of per-line halfspaces: congested lines keep
F_k x >= T_k, the remaining limited lines keep F_j x < T_j. Strict sides are
realized as <= T - delta with delta = 1e-6 MW; boundary states (flow equal to
the limit) belong to the congested side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import DcModel
from .solvers.simplex import solve_lp

DELTA_STRICT_MW = 1e-6
DEFAULT_CANDIDATE_CAP = 12


def region_of_state(model: DcModel, x: np.ndarray) -> frozenset[int]:
    """Congestion pattern of a state: limited closed branches at or beyond
    their limit."""
    x = np.asarray(x, dtype=float)
    f = model.F @ x
    return frozenset(
        k.id for r, k in enumerate(model.case.branches)
        if k.closed and k.limited and f[r] >= model.limits_pu[r]
    )


def boundary_margin(model: DcModel, x: np.ndarray) -> float:
    """Shortest flow-space distance (MW) from a state to any limit boundary."""
    x = np.asarray(x, dtype=float)
    f = model.F @ x
    rows = [model.branch_row(k) for k in model.limited_branch_ids]
    if not rows:
        return float("inf")
    gaps = [abs(f[r] - model.limits_pu[r]) for r in rows]
    return float(min(gaps) * model.case.base_mva)


@dataclass(frozen=True, eq=False)
class PriceRegion:
    pattern: frozenset[int]
    nonempty: bool
    witness: np.ndarray | None = None   # state attaining the max-margin center
    margin_mw: float = 0.0              # optimal beta; > 0 iff nonempty


def region_witness(model: DcModel, pattern) -> PriceRegion:
    """Decide polytope nonemptiness by maximizing the boundary margin:

        max beta  s.t.  F_i x >= T_i + beta (i in pattern),
                        F_j x <= T_j - beta (other limited j),
                        x in [-pi, pi]^n.

    Nonempty iff the optimum is strictly positive."""
    pattern = frozenset(int(k) for k in pattern)
    limited = list(model.limited_branch_ids)
    n = model.n
    delta = DELTA_STRICT_MW / model.case.base_mva

    if not limited:
        return PriceRegion(pattern=frozenset(), nonempty=True, witness=np.zeros(n), margin_mw=float("inf"))

    rows, rhs = [], []
    for k in limited:
        r = model.branch_row(k)
        Frow = model.F[r]
        T = model.limits_pu[r]
        if k in pattern:
            rows.append(np.concatenate([-Frow, [1.0]]))   # -Fx + beta <= -T
            rhs.append(-T)
        else:
            rows.append(np.concatenate([Frow, [1.0]]))    # Fx + beta <= T - delta
            rhs.append(T - delta)
    finite_T = model.limits_pu[np.isfinite(model.limits_pu)]
    beta_max = float(np.max(np.abs(finite_T), initial=0.0) + np.pi * np.abs(model.F).sum(axis=1).max() + 1.0)

    c = np.zeros(n + 1)
    c[-1] = -1.0
    lb = np.concatenate([-np.pi * np.ones(n), [-beta_max]])
    ub = np.concatenate([np.pi * np.ones(n), [beta_max]])
    res = solve_lp(c, A_ub=np.array(rows), b_ub=np.array(rhs), lb=lb, ub=ub)
    if not res.ok:
        return PriceRegion(pattern=pattern, nonempty=False)
    beta = float(res.x[-1])
    if beta <= 0.0:
        return PriceRegion(pattern=pattern, nonempty=False, margin_mw=beta * model.case.base_mva)
    return PriceRegion(pattern=pattern, nonempty=True, witness=res.x[:n].copy(),
                       margin_mw=beta * model.case.base_mva)


def candidate_patterns(model: DcModel, flows_mw: np.ndarray, threshold_mw: float,
                       cap: int = DEFAULT_CANDIDATE_CAP) -> list[frozenset[int]]:
    """Congestion patterns reachable by perturbing lines near their limits.

    Candidate lines are limited lines within `threshold_mw` of their limit
    (nearest first, truncated to `cap`); lines beyond the limit by more than
    the threshold are congested in every returned pattern. Returns the
    2^|candidates| combinations in a deterministic order."""
    if threshold_mw <= 0:
        raise ValueError("candidate threshold must be > 0")
    flows_mw = np.asarray(flows_mw, dtype=float)
    always: set[int] = set()
    cand: list[tuple[float, int]] = []
    for k in model.limited_branch_ids:
        r = model.branch_row(k)
        gap = flows_mw[r] - model.limits_pu[r] * model.case.base_mva
        if abs(gap) <= threshold_mw:
            cand.append((abs(gap), k))
        elif gap > threshold_mw:
            always.add(k)
    cand.sort()
    chosen = sorted(k for _, k in cand[:cap])

    patterns = []
    for mask in range(1 << len(chosen)):
        pat = set(always)
        for i, k in enumerate(chosen):
            if mask >> i & 1:
                pat.add(k)
        patterns.append(frozenset(pat))
    seen: set[frozenset[int]] = set()
    unique = [p for p in patterns if not (p in seen or seen.add(p))]
    unique.sort(key=lambda p: tuple(sorted(p)))
    return unique
