"""Nonlinear evaluation backend: lossless sine-branch AC model.

Measurements are real power only, p_ij = (V_i V_j / x_ij) sin(th_i - th_j)
on closed branches, with voltage magnitudes known and held fixed, so the
estimator is a Gauss-Newton WLS over phase angles. This is the backend that
checks how much of a DC-designed attack survives a nonlinear estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cases import MeterConfig, PowerCase
from .errors import ConvergenceError, EstimationError
from .estimation import DetectorConfig, EstimateReport, detector_threshold

PF_TOL = 1e-8
GN_STEP_TOL = 1e-8
MAX_ITER = 50


@dataclass(frozen=True, eq=False)
class AcState:
    magnitudes: np.ndarray   # per bus, p.u.
    angles: np.ndarray       # per bus, rad; reference fixed at 0

    def __post_init__(self):
        if np.any(self.magnitudes <= 0):
            raise EstimationError("voltage magnitudes must be positive")


def _branch_terms(case: PowerCase):
    bus_idx = {b.id: i for i, b in enumerate(case.buses)}
    return bus_idx, [(r, k, bus_idx[k.from_bus], bus_idx[k.to_bus])
                     for r, k in enumerate(case.branches) if k.closed]


def ac_branch_flows(case: PowerCase, state: AcState) -> np.ndarray:
    """Per-branch forward real-power flow, MW (open branches read 0)."""
    _, terms = _branch_terms(case)
    V, th = state.magnitudes, state.angles
    f = np.zeros(len(case.branches))
    for r, k, i, j in terms:
        f[r] = V[i] * V[j] / k.x * np.sin(th[i] - th[j])
    return f * case.base_mva


def ac_injections(case: PowerCase, state: AcState) -> np.ndarray:
    """Per-bus real-power injection, MW."""
    f = ac_branch_flows(case, state)
    bus_idx = {b.id: i for i, b in enumerate(case.buses)}
    p = np.zeros(len(case.buses))
    for r, k in enumerate(case.branches):
        if not k.closed:
            continue
        p[bus_idx[k.from_bus]] += f[r]
        p[bus_idx[k.to_bus]] -= f[r]
    return p


def ac_measurements(case: PowerCase, meters: MeterConfig, state: AcState) -> np.ndarray:
    """Exact meter vector h(x) in p.u. (injections + both-direction flows)."""
    f = ac_branch_flows(case, state) / case.base_mva
    p = ac_injections(case, state) / case.base_mva
    bus_idx = {b.id: i for i, b in enumerate(case.buses)}
    row = {k.id: r for r, k in enumerate(case.branches)}
    closed = {k.id for k in case.closed_branches}
    z = np.zeros(meters.m)
    for i, mt in enumerate(meters.meters):
        if mt.kind == "injection":
            z[i] = p[bus_idx[mt.bus]]
        elif mt.branch_id in closed:
            z[i] = -f[row[mt.branch_id]] if mt.reverse else f[row[mt.branch_id]]
    return z


def ac_power_flow(case: PowerCase, injections_mw: np.ndarray,
                  magnitudes: np.ndarray) -> AcState:
    """Newton-Raphson real-power flow with fixed magnitudes; the reference
    bus absorbs the imbalance. Raises ConvergenceError after 50 iterations."""
    nb = len(case.buses)
    injections_pu = np.asarray(injections_mw, dtype=float) / case.base_mva
    V = np.asarray(magnitudes, dtype=float)
    ref_idx = next(i for i, b in enumerate(case.buses) if b.id == case.reference_bus)
    free = [i for i in range(nb) if i != ref_idx]
    _, terms = _branch_terms(case)

    th = np.zeros(nb)
    for _ in range(MAX_ITER):
        state = AcState(magnitudes=V, angles=th)
        mismatch = (ac_injections(case, state) / case.base_mva - injections_pu)[free]
        if np.linalg.norm(mismatch) <= PF_TOL:
            return state
        J = np.zeros((nb, nb))
        for r, k, i, j in terms:
            c = V[i] * V[j] / k.x * np.cos(th[i] - th[j])
            J[i, i] += c
            J[i, j] -= c
            J[j, j] += c
            J[j, i] -= c
        Jf = J[np.ix_(free, free)]
        try:
            step = np.linalg.solve(Jf, -mismatch)
        except np.linalg.LinAlgError as e:
            raise ConvergenceError("power flow Jacobian is singular") from e
        th[free] += step
    raise ConvergenceError(f"power flow did not converge in {MAX_ITER} iterations")


def _meter_jacobian(case: PowerCase, meters: MeterConfig, V, th, free):
    """Rows d h / d th over the free (non-reference) angles."""
    bus_idx = {b.id: i for i, b in enumerate(case.buses)}
    row = {k.id: r for r, k in enumerate(case.branches)}
    closed = {k.id: k for k in case.closed_branches}
    col_of = {b: c for c, b in enumerate(free)}
    J = np.zeros((meters.m, len(free)))

    def add_flow(jrow, k, sign):
        i, j = bus_idx[k.from_bus], bus_idx[k.to_bus]
        c = sign * V[i] * V[j] / k.x * np.cos(th[i] - th[j])
        if i in col_of:
            J[jrow, col_of[i]] += c
        if j in col_of:
            J[jrow, col_of[j]] -= c

    for m_i, mt in enumerate(meters.meters):
        if mt.kind == "injection":
            b = bus_idx[mt.bus]
            for k in closed.values():
                if bus_idx[k.from_bus] == b:
                    add_flow(m_i, k, +1.0)
                elif bus_idx[k.to_bus] == b:
                    add_flow(m_i, k, -1.0)
        elif mt.branch_id in closed:
            add_flow(m_i, closed[mt.branch_id], -1.0 if mt.reverse else 1.0)
    return J


def ac_wls_estimate(case: PowerCase, meters: MeterConfig, z: np.ndarray,
                    magnitudes: np.ndarray,
                    detector: DetectorConfig = DetectorConfig()) -> tuple[AcState, EstimateReport]:
    """Gauss-Newton WLS over phase angles from a flat start, magnitudes held
    fixed at their known values. Returns the estimated state and a report in
    the same shape the DC estimator produces. Divergence raises
    ConvergenceError (callers count it as a detection)."""
    z = np.asarray(z, dtype=float)
    if z.shape != (meters.m,):
        raise EstimationError(f"measurement vector has length {z.shape}, expected {meters.m}")
    V = np.asarray(magnitudes, dtype=float)
    nb = len(case.buses)
    ref_idx = next(i for i, b in enumerate(case.buses) if b.id == case.reference_bus)
    free = [i for i in range(nb) if i != ref_idx]
    Rinv = 1.0 / meters.noise_std**2

    th = np.zeros(nb)

    def objective(th_vec):
        resid = z - ac_measurements(case, meters, AcState(V, th_vec))
        return float(resid @ (Rinv * resid)), resid

    obj, resid = objective(th)
    converged = False
    for _ in range(MAX_ITER):
        J = _meter_jacobian(case, meters, V, th, free)
        JT_R = J.T * Rinv[None, :]
        try:
            step = np.linalg.solve(JT_R @ J, JT_R @ resid)
        except np.linalg.LinAlgError as e:
            raise EstimationError("AC measurement model is unobservable") from e
        if not np.all(np.isfinite(step)):
            raise ConvergenceError("Gauss-Newton step is not finite")
        # step halving keeps the objective non-increasing
        alpha = 1.0
        for _ in range(30):
            cand = th.copy()
            for c, b in enumerate(free):
                cand[b] += alpha * step[c]
            cand_obj, cand_resid = objective(cand)
            if cand_obj <= obj + 1e-12:
                break
            alpha *= 0.5
        else:
            raise ConvergenceError("Gauss-Newton line search failed")
        th, obj, resid = cand, cand_obj, cand_resid
        if np.linalg.norm(step) * alpha <= GN_STEP_TOL:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"Gauss-Newton did not converge in {MAX_ITER} iterations")

    state = AcState(magnitudes=V, angles=th)
    flows_mw = ac_branch_flows(case, state)
    pattern = frozenset(
        k.id for r, k in enumerate(case.branches)
        if k.closed and k.limited and flows_mw[r] >= k.limit
    )
    closed_meters = sum(
        1 for mt in meters.meters
        if mt.kind == "injection" or mt.branch_id in {k.id for k in case.closed_branches}
    )
    dof = closed_meters - len(free)
    tau = detector_threshold(dof, detector.alpha)
    report = EstimateReport(
        x_hat=th[free].copy(),
        flows_mw=flows_mw,
        pattern=pattern,
        statistic=obj,
        threshold=tau,
        detected=bool(obj >= tau),
        dof=dof,
        alpha=detector.alpha,
    )
    return state, report
