"""DC model matrices: branch-flow sensitivities, the measurement matrix,
PTDFs, observability, and breaker/topology application.

All matrices are kept in per-unit (states in rad); MW conversion happens at
the interface via `base_mva`. Open branches keep their meters in the
canonical ordering with identically-zero rows so the measurement dimension
is invariant under topology changes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .cases import MeterConfig, PowerCase, canonical_meters
from .errors import NetworkError

RANK_RTOL = 1e-8  # singular values below RANK_RTOL * sigma_max count as zero


@dataclass(frozen=True, eq=False)
class DcModel:
    case: PowerCase
    meters: MeterConfig
    F: np.ndarray             # branches x n, p.u. flow per rad (zero rows for open branches)
    H: np.ndarray             # m x n, p.u.
    ptdf: np.ndarray          # branches x buses, dimensionless; reference column is zero
    limits_pu: np.ndarray     # per-branch limit, p.u. (np.inf = unlimited)
    state_buses: tuple[int, ...]   # bus ids owning a state angle, in state order

    @property
    def n(self) -> int:
        return self.F.shape[1]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @cached_property
    def active_meters(self) -> np.ndarray:
        """Boolean mask of meters with a nonzero model row."""
        return np.any(self.H != 0.0, axis=1)

    @property
    def dof(self) -> int:
        """Detector degrees of freedom: active meters minus state dimension."""
        return int(np.count_nonzero(self.active_meters)) - self.n

    @cached_property
    def rank(self) -> int:
        s = np.linalg.svd(self.H, compute_uv=False)
        if s.size == 0 or s[0] == 0.0:
            return 0
        return int(np.count_nonzero(s > RANK_RTOL * s[0]))

    @cached_property
    def limited_branch_ids(self) -> tuple[int, ...]:
        return tuple(k.id for k in self.case.branches if k.limited and k.closed)

    def branch_row(self, branch_id: int) -> int:
        for r, k in enumerate(self.case.branches):
            if k.id == branch_id:
                return r
        raise NetworkError(f"no branch with id {branch_id}")

    def limit_mw(self, branch_id: int) -> float:
        return self.limits_pu[self.branch_row(branch_id)] * self.case.base_mva


def _state_buses(case: PowerCase) -> tuple[int, ...]:
    return tuple(b.id for b in case.buses if b.id != case.reference_bus)


def build_dc_model(case: PowerCase, meters: MeterConfig | None = None,
                   require_observable: bool = True) -> DcModel:
    """Assemble F, H and the PTDF for the closed-breaker topology.

    Raises NetworkError if the closed subgraph is disconnected, or (unless
    `require_observable=False`) if H is rank deficient.
    """
    from .cases import _connected, build_measurement_model

    if meters is None:
        meters = build_measurement_model(case)
    if tuple(meters.meters) != canonical_meters(case):
        raise NetworkError("meter configuration does not match the case's canonical meter set")
    closed_edges = [(k.from_bus, k.to_bus) for k in case.branches if k.closed]
    if not _connected(case.bus_ids, closed_edges):
        raise NetworkError("closed-breaker subgraph is disconnected")

    state_buses = _state_buses(case)
    col = {bus: i for i, bus in enumerate(state_buses)}
    n = len(state_buses)
    nb = len(case.branches)

    F = np.zeros((nb, n))
    for r, k in enumerate(case.branches):
        if not k.closed:
            continue
        b = 1.0 / k.x
        if k.from_bus in col:
            F[r, col[k.from_bus]] += b
        if k.to_bus in col:
            F[r, col[k.to_bus]] -= b

    H = np.zeros((meters.m, n))
    row_of_branch = {k.id: r for r, k in enumerate(case.branches)}
    for i, mt in enumerate(meters.meters):
        if mt.kind == "injection":
            for k in case.branches:
                if not k.closed:
                    continue
                if k.from_bus == mt.bus:
                    H[i] += F[row_of_branch[k.id]]
                elif k.to_bus == mt.bus:
                    H[i] -= F[row_of_branch[k.id]]
        else:
            sign = -1.0 if mt.reverse else 1.0
            H[i] = sign * F[row_of_branch[mt.branch_id]]

    # PTDF: unit injection at each bus, counter-injection at the reference.
    B_red = _reduced_susceptance(case, state_buses)
    theta_cols = np.linalg.solve(B_red, np.eye(n))
    ptdf = np.zeros((nb, len(case.buses)))
    for j, bus in enumerate(case.buses):
        if bus.id == case.reference_bus:
            continue
        ptdf[:, j] = F @ theta_cols[:, col[bus.id]]

    limits = np.array(
        [np.inf if k.limit is None or not k.closed else k.limit / case.base_mva
         for k in case.branches]
    )
    model = DcModel(case=case, meters=meters, F=F, H=H, ptdf=ptdf,
                    limits_pu=limits, state_buses=state_buses)
    if require_observable and model.rank < n:
        raise NetworkError(
            f"measurement model is unobservable: rank {model.rank} < {n} states"
        )
    return model


def _reduced_susceptance(case: PowerCase, state_buses) -> np.ndarray:
    col = {bus: i for i, bus in enumerate(state_buses)}
    n = len(state_buses)
    B = np.zeros((n, n))
    for k in case.branches:
        if not k.closed:
            continue
        b = 1.0 / k.x
        fi = col.get(k.from_bus)
        ti = col.get(k.to_bus)
        if fi is not None:
            B[fi, fi] += b
        if ti is not None:
            B[ti, ti] += b
        if fi is not None and ti is not None:
            B[fi, ti] -= b
            B[ti, fi] -= b
    return B


def branch_flows(model: DcModel, x: np.ndarray) -> np.ndarray:
    """Branch flows f = Fx in MW for a state vector in rad."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise NetworkError(f"state dimension {x.shape} does not match n={model.n}")
    return model.F @ x * model.case.base_mva


def is_observable(model: DcModel) -> bool:
    return model.rank == model.n


def apply_topology(case: PowerCase, removed_ids) -> PowerCase:
    """Open the breakers of `removed_ids`. Raises NetworkError if that
    disconnects the network (estimation and pricing are then undefined)."""
    from .cases import _connected

    removed = set(int(r) for r in removed_ids)
    closed_ids = {k.id for k in case.closed_branches}
    missing = removed - closed_ids
    if missing:
        raise NetworkError(f"cannot remove branches not currently closed: {sorted(missing)}")
    edges = [(k.from_bus, k.to_bus) for k in case.branches
             if k.closed and k.id not in removed]
    if not _connected(case.bus_ids, edges):
        raise NetworkError(f"removing branches {sorted(removed)} disconnects the network")
    return case.with_open_branches(removed)


def injections_to_state(case: PowerCase, p_mw: np.ndarray) -> np.ndarray:
    """Solve the DC network for bus injections (MW, reference bus absorbs the
    imbalance): returns the state vector in rad."""
    state_buses = _state_buses(case)
    col = {bus: i for i, bus in enumerate(state_buses)}
    B = _reduced_susceptance(case, state_buses)
    p = np.asarray(p_mw, dtype=float) / case.base_mva
    rhs = np.zeros(len(state_buses))
    for j, bus in enumerate(case.buses):
        if bus.id in col:
            rhs[col[bus.id]] = p[j]
    return np.linalg.solve(B, rhs)


def day_ahead_state(case: PowerCase) -> np.ndarray:
    """State at the merit-order day-ahead dispatch (generation minus load)."""
    from .cases import merit_order_dispatch

    p = merit_order_dispatch(case) - case.loads_mw
    return injections_to_state(case, p)


def export_matrices(model: DcModel, directory) -> list[str]:
    """Dump F, H, and the PTDF as CSV files for debugging; returns the paths."""
    from pathlib import Path

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, mat in (("F", model.F), ("H", model.H), ("ptdf", model.ptdf)):
        p = out / f"{model.case.name}_{name}.csv"
        np.savetxt(p, mat, delimiter=",")
        written.append(str(p))
    return written
