"""Ex-post incremental OPF and real-time locational marginal prices.

Given an estimated congestion pattern, the incremental redispatch LP

    min  c_g' dp - c_l' dd
    s.t. sum(dp) = sum(dd)                  (dual: eta)
         dp/dd inside their incremental boxes
         A_k (dp - dd) <= 0   for congested k   (dual: mu_k >= 0)

is solved with the dense simplex, duals are read from the optimal basis, and
the per-bus price is lambda_i = eta - sum_k A_ki mu_k, clamped to the price
caps afterwards. Generators are canonically sorted before the LP is built so
prices do not depend on input ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cases import MarketConfig
from .errors import PricingError
from .network import DcModel
from .solvers.simplex import solve_lp

RPP_EXCLUDE_TOL = 1e-6  # |lambda| below this excludes the bus from relative metrics


@dataclass(frozen=True, eq=False)
class LmpSolution:
    pattern: frozenset[int]
    dp: np.ndarray                 # per-generator incremental dispatch (canonical order), MW
    dd: np.ndarray                 # per-dispatchable-load increment, MW
    eta: float                     # $/MWh energy dual
    mu: dict[int, float]           # congestion duals by branch id, >= 0
    lmp: np.ndarray                # per-bus price, clamped, $/MWh
    lmp_preclamp: np.ndarray       # per-bus price before caps
    objective: float               # $/h
    degenerate: bool               # optimal basis is dual-degenerate: duals may be non-unique

    def to_dict(self, bus_ids) -> dict:
        return {
            "pattern": sorted(self.pattern),
            "eta": self.eta,
            "mu": {str(k): v for k, v in sorted(self.mu.items())},
            "lmp": {str(b): float(l) for b, l in zip(bus_ids, self.lmp)},
            "objective": self.objective,
            "degenerate": self.degenerate,
        }


def _canonical_market(market: MarketConfig):
    gens = sorted(market.generators, key=lambda g: (g.bus, g.offer, g.capacity))
    loads = sorted(market.dispatchable_loads, key=lambda d: (d.bus, d.bid, d.dd_max))
    return gens, loads


def solve_expost_lmp(market: MarketConfig, model: DcModel, pattern,
                     load_perturbation: tuple[int, float] | None = None) -> LmpSolution:
    """Price a congestion pattern (iterable of branch ids).

    `load_perturbation = (bus_index, delta_mw)` adds an extra load at a bus,
    entering the balance and congested-line rows through the PTDF; it exists
    for envelope (finite-difference) validation of the prices.
    """
    pattern = frozenset(int(k) for k in pattern)
    limited = set(model.limited_branch_ids)
    if not pattern <= limited:
        raise PricingError(f"pattern {sorted(pattern)} is not a subset of limited closed branches {sorted(limited)}")
    gens, dloads = _canonical_market(market)
    ng, nl = len(gens), len(dloads)
    if ng == 0 or all(g.dp_max - g.dp_min <= 0 for g in gens):
        raise PricingError("no generator with a nonzero incremental range")

    nv = ng + nl
    c = np.array([g.offer for g in gens] + [-d.bid for d in dloads])
    lb = np.array([g.dp_min for g in gens] + [d.dd_min for d in dloads])
    ub = np.array([g.dp_max for g in gens] + [d.dd_max for d in dloads])
    A_eq = np.concatenate([np.ones(ng), -np.ones(nl)])[None, :]
    b_eq = np.zeros(1)

    pat = sorted(pattern)
    A_ub = np.zeros((len(pat), nv))
    b_ub = np.zeros(len(pat))
    bus_cols = {b.id: j for j, b in enumerate(model.case.buses)}
    for r, k in enumerate(pat):
        arow = model.ptdf[model.branch_row(k)]
        for j, g in enumerate(gens):
            A_ub[r, j] = arow[bus_cols[g.bus]]
        for j, d in enumerate(dloads):
            A_ub[r, ng + j] = -arow[bus_cols[d.bus]]

    if load_perturbation is not None:
        bus_idx, delta = load_perturbation
        b_eq[0] += delta
        for r, k in enumerate(pat):
            b_ub[r] += model.ptdf[model.branch_row(k), bus_idx] * delta

    res = solve_lp(c, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, lb=lb, ub=ub)
    if res.status == "infeasible":
        raise PricingError(f"pricing LP infeasible for pattern {sorted(pattern)}")
    if res.status != "optimal":
        raise PricingError(f"pricing LP failed ({res.status}): market configuration error")

    eta = float(res.y_eq[0])
    mu = {k: max(0.0, -float(res.y_ub[r])) for r, k in enumerate(pat)}
    lam = np.full(len(model.case.buses), eta)
    for r, k in enumerate(pat):
        lam -= model.ptdf[model.branch_row(k)] * mu[k]
    floor, ceiling = market.price_caps
    return LmpSolution(
        pattern=pattern,
        dp=res.x[:ng].copy(),
        dd=res.x[ng:].copy(),
        eta=eta,
        mu=mu,
        lmp=np.clip(lam, floor, ceiling),
        lmp_preclamp=lam,
        objective=float(res.objective),
        degenerate=bool(res.dual_degenerate),
    )


class PriceTable:
    """Lazy pattern -> LmpSolution cache. Prices depend only on the pattern
    for a fixed model and market, so Monte Carlo runs share this across
    trials. Unpriced patterns (infeasible LPs) are cached as None."""

    def __init__(self, market: MarketConfig, model: DcModel):
        self.market = market
        self.model = model
        self._cache: dict[frozenset[int], LmpSolution | None] = {}

    def price(self, pattern) -> LmpSolution | None:
        key = frozenset(int(k) for k in pattern)
        if key not in self._cache:
            try:
                self._cache[key] = solve_expost_lmp(self.market, self.model, key)
            except PricingError:
                self._cache[key] = None
        return self._cache[key]


# ---------------------------------------------------------------------------
# Price-perturbation metrics
# ---------------------------------------------------------------------------

@dataclass
class PriceMetrics:
    rpp: dict[int, float]          # per-bus relative price perturbation (included buses)
    arpp: float
    trials: int
    excluded_buses: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rpp": {str(b): v for b, v in sorted(self.rpp.items())},
            "arpp": self.arpp,
            "trials": self.trials,
            "excluded_buses": self.excluded_buses,
        }


def price_metrics(base, perturbed, bus_ids) -> PriceMetrics:
    """Per-bus RPP and bus-averaged ARPP over paired price trials.

    `base` and `perturbed` are equal-length sequences of per-bus price
    vectors. Terms with |base price| < 1e-6 are dropped; a bus with no valid
    term at all lands in excluded_buses and is left out of the ARPP mean.
    """
    base = np.asarray(base, dtype=float)
    pert = np.asarray(perturbed, dtype=float)
    if base.shape != pert.shape:
        raise PricingError("base and perturbed price arrays differ in shape")
    if base.ndim == 1:
        base = base[None, :]
        pert = pert[None, :]
    if base.shape[0] == 0:
        raise PricingError("price metrics need at least one trial")
    if base.shape[1] != len(bus_ids):
        raise PricingError("price vectors do not match the bus list")

    valid = np.abs(base) >= RPP_EXCLUDE_TOL
    rel = np.zeros_like(base)
    np.divide(np.abs(pert - base), np.abs(base), out=rel, where=valid)
    counts = valid.sum(axis=0)
    rpp: dict[int, float] = {}
    excluded: list[int] = []
    for j, bus in enumerate(bus_ids):
        if counts[j] == 0:
            excluded.append(bus)
        else:
            rpp[bus] = float(rel[valid[:, j], j].sum() / counts[j])
    arpp = float(np.mean(list(rpp.values()))) if rpp else 0.0
    return PriceMetrics(rpp=rpp, arpp=arpp, trials=base.shape[0], excluded_buses=excluded)
