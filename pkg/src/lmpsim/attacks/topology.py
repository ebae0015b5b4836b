"""State-preserving line-removal topology attacks.

Flipping the breaker data of a removed line set and editing the four local
meters per line (subtract the measured line flows from the endpoint
injections, zero both flow meters) makes the measurement vector exactly
consistent with the reduced topology, so the state estimate is preserved and
the residual test sees nothing beyond ordinary noise. Price perturbation
comes entirely from the restructured price regions and shift factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..cases import MeterConfig, PowerCase, suspects_for_lines
from ..errors import NetworkError
from ..estimation import DetectorConfig, estimate
from ..network import DcModel, apply_topology, build_dc_model, is_observable
from ..pricing import PriceTable
from .meter import SuspectSpace


@dataclass(frozen=True)
class Capabilities:
    """What the adversary can touch: meters and breaker-data channels."""
    suspects: SuspectSpace
    breakers: frozenset[int]

    @staticmethod
    def for_lines(case: PowerCase, meters: MeterConfig, line_ids) -> "Capabilities":
        lines = frozenset(int(i) for i in line_ids)
        return Capabilities(
            suspects=SuspectSpace.from_meters(suspects_for_lines(case, meters, lines)),
            breakers=lines,
        )


@dataclass
class TopologyAttackPlan:
    removed: frozenset[int]
    breaker_flips: tuple[int, ...]        # branch ids whose breaker data is flipped
    a: np.ndarray                         # sparse meter modification, p.u.
    feasible: bool
    meter_access_ok: bool = True
    breaker_access_ok: bool = True
    connected_ok: bool = True
    observable_ok: bool = True
    perturbation: float = 0.0             # filled by the worst-target search

    def to_dict(self) -> dict:
        nz = np.flatnonzero(self.a)
        return {
            "removed": sorted(self.removed),
            "breaker_flips": list(self.breaker_flips),
            "a_nonzero": {str(int(i)): float(self.a[i]) for i in nz},
            "feasible": self.feasible,
            "checks": {
                "meter_access": self.meter_access_ok,
                "breaker_access": self.breaker_access_ok,
                "connected": self.connected_ok,
                "observable": self.observable_ok,
            },
            "perturbation": self.perturbation,
        }


def incidence_column(case: PowerCase, meters: MeterConfig, branch_id: int) -> np.ndarray:
    """Measurement-to-branch incidence column: +1 at the forward flow meter
    and the from-bus injection, -1 at the reverse flow meter and the to-bus
    injection."""
    k = case.branch_by_id(branch_id)
    col = np.zeros(meters.m)
    col[meters.index_of(f"flow:{k.id}:fwd")] = 1.0
    col[meters.index_of(f"inj:{k.from_bus}")] = 1.0
    col[meters.index_of(f"flow:{k.id}:rev")] = -1.0
    col[meters.index_of(f"inj:{k.to_bus}")] = -1.0
    return col


def _required_meters(case: PowerCase, meters: MeterConfig, removed) -> set[int]:
    need = set()
    for rid in removed:
        k = case.branch_by_id(rid)
        need.add(meters.index_of(f"flow:{k.id}:fwd"))
        need.add(meters.index_of(f"flow:{k.id}:rev"))
        need.add(meters.index_of(f"inj:{k.from_bus}"))
        need.add(meters.index_of(f"inj:{k.to_bus}"))
    return need


def line_removal_attack(case: PowerCase, meters: MeterConfig, z: np.ndarray,
                        removed, capabilities: Capabilities) -> TopologyAttackPlan:
    """Construct the breaker flips and companion meter edits for one target.

    Per removed line (i,j): subtract the measured z_ij from the injection at
    i and z_ji from the injection at j, then zero both flow meters. Feasible
    only when every touched meter is in the suspect set, every flipped
    breaker is accessible, and the target stays connected and observable."""
    removed = frozenset(int(r) for r in removed)
    closed = {k.id for k in case.closed_branches}
    if not removed <= closed:
        raise NetworkError(f"removal targets must be closed branches, got {sorted(removed - closed)}")
    z = np.asarray(z, dtype=float)

    need = _required_meters(case, meters, removed)
    meter_ok = need <= set(capabilities.suspects.indices)
    breaker_ok = removed <= capabilities.breakers
    connected_ok, observable_ok = True, True
    if removed:
        try:
            claimed = apply_topology(case, removed)
            claimed_model = build_dc_model(claimed, meters, require_observable=False)
            observable_ok = is_observable(claimed_model)
        except NetworkError:
            connected_ok = False
            observable_ok = False

    a = np.zeros(meters.m)
    for rid in sorted(removed):
        k = case.branch_by_id(rid)
        i_fwd = meters.index_of(f"flow:{k.id}:fwd")
        i_rev = meters.index_of(f"flow:{k.id}:rev")
        a[meters.index_of(f"inj:{k.from_bus}")] -= z[i_fwd]
        a[meters.index_of(f"inj:{k.to_bus}")] -= z[i_rev]
        a[i_fwd] = -z[i_fwd]
        a[i_rev] = -z[i_rev]

    feasible = meter_ok and breaker_ok and connected_ok and observable_ok
    return TopologyAttackPlan(
        removed=removed,
        breaker_flips=tuple(sorted(removed)),
        a=a,
        feasible=feasible,
        meter_access_ok=meter_ok,
        breaker_access_ok=breaker_ok,
        connected_ok=connected_ok,
        observable_ok=observable_ok,
    )


def feasible_targets(case: PowerCase, meters: MeterConfig, capabilities: Capabilities,
                     max_removals: int) -> list[frozenset[int]]:
    """All nonempty removable line sets (up to max_removals) passing the
    meter-access, breaker-access, connectivity, and observability checks."""
    if max_removals < 1:
        raise ValueError("max_removals must be >= 1")
    from itertools import combinations

    removable = sorted(
        k.id for k in case.closed_branches
        if k.id in capabilities.breakers
        and _required_meters(case, meters, [k.id]) <= set(capabilities.suspects.indices)
    )
    out = []
    for size in range(1, max_removals + 1):
        for combo in combinations(removable, size):
            removed = frozenset(combo)
            try:
                claimed = apply_topology(case, removed)
            except NetworkError:
                continue
            model = build_dc_model(claimed, meters, require_observable=False)
            if is_observable(model):
                out.append(removed)
    return out


class TopologyEvaluator:
    """Caches per-target claimed models and price tables across Monte Carlo
    trials (the claimed topology set is small; prices depend only on the
    pattern under each claimed model)."""

    def __init__(self, case: PowerCase, meters: MeterConfig, base_model: DcModel,
                 detector: DetectorConfig = DetectorConfig()):
        self.case = case
        self.meters = meters
        self.base_model = base_model
        self.detector = detector
        self.base_table = PriceTable(case.market, base_model)
        self._claimed: dict[frozenset[int], tuple[DcModel, PriceTable]] = {}

    def claimed(self, removed: frozenset[int]):
        if removed not in self._claimed:
            claimed_case = apply_topology(self.case, removed)
            model = build_dc_model(claimed_case, self.meters)
            self._claimed[removed] = (model, PriceTable(claimed_case.market, model))
        return self._claimed[removed]


@dataclass
class TargetEvaluation:
    removed: frozenset[int]
    perturbation: float
    detected: bool
    lmp: np.ndarray = field(repr=False, default=None)


def worst_topology_attack(evaluator: TopologyEvaluator, z: np.ndarray,
                          capabilities: Capabilities, max_removals: int):
    """Search the feasible targets for the one maximizing the summed relative
    price perturbation against the paired no-attack prices on the same
    snapshot. Returns (plan, per-target table)."""
    case, meters = evaluator.case, evaluator.meters
    z = np.asarray(z, dtype=float)

    base_report = estimate(evaluator.base_model, z, evaluator.detector)
    lam_base = evaluator.base_table.price(base_report.pattern)
    targets = feasible_targets(case, meters, capabilities, max_removals)
    empty = TopologyAttackPlan(removed=frozenset(), breaker_flips=(), a=np.zeros(meters.m),
                               feasible=False)
    if lam_base is None or not targets:
        return empty, []

    table: list[TargetEvaluation] = []
    best = None
    for removed in sorted(targets, key=lambda s: tuple(sorted(s))):
        plan = line_removal_attack(case, meters, z, removed, capabilities)
        if not plan.feasible:
            continue
        model, prices = evaluator.claimed(removed)
        za = z + plan.a
        report = estimate(model, za, evaluator.detector)
        lam = prices.price(report.pattern)
        if lam is None:
            continue
        valid = np.abs(lam_base.lmp) >= 1e-6
        if not np.any(valid):
            continue
        pert = float(np.sum(np.abs(lam.lmp[valid] - lam_base.lmp[valid]) / np.abs(lam_base.lmp[valid])))
        table.append(TargetEvaluation(removed=removed, perturbation=pert,
                                      detected=report.detected, lmp=lam.lmp))
        if best is None or pert > best[0] + 1e-12:
            best = (pert, plan)
    if best is None:
        return empty, table
    pert, plan = best
    plan.perturbation = pert
    return plan, table
