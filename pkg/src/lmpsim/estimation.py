"""WLS state estimation, residual operators, and the weighted-residual
threshold detector.

The estimator gain is K = (H'R^-1 H)^-1 H'R^-1, materialized through a QR
factorization of the noise-whitened measurement matrix (the attack modules
need K explicitly). The detector compares z'Wz, W = U'R^-1 U, U = I - HK,
against the upper chi-square quantile at the configured false-alarm rate.
Degrees of freedom count only meters with nonzero model rows; zero rows
(open branches) stay in the vectors but read exactly zero by convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cases import MeterConfig, PowerCase
from .errors import EstimationError
from .network import DcModel, apply_topology, build_dc_model


@dataclass(frozen=True)
class DetectorConfig:
    alpha: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise EstimationError(f"false-alarm probability must be in (0,1), got {self.alpha}")


@dataclass(frozen=True, eq=False)
class EstimatorOperators:
    K: np.ndarray   # n x m gain
    U: np.ndarray   # m x m residual projector
    W: np.ndarray   # m x m detector kernel

    def statistic(self, z: np.ndarray) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.W @ z)


@lru_cache(maxsize=64)
def operators(model: DcModel) -> EstimatorOperators:
    """Build (and cache) K, U, W for a model. Raises if unobservable."""
    if model.rank < model.n:
        raise EstimationError("cannot build estimator: model is unobservable")
    d = 1.0 / model.meters.noise_std          # R^{-1/2} diagonal
    Hw = model.H * d[:, None]
    Q, Rt = np.linalg.qr(Hw)
    K = np.linalg.solve(Rt, Q.T) * d[None, :]
    U = np.eye(model.m) - model.H @ K
    W = (U * d[:, None] ** 2).T @ U           # U' R^-1 U, R diagonal
    W = 0.5 * (W + W.T)
    return EstimatorOperators(K=K, U=U, W=W)


@dataclass(frozen=True, eq=False)
class EstimateReport:
    x_hat: np.ndarray            # rad
    flows_mw: np.ndarray         # per-branch estimated flow, MW
    pattern: frozenset[int]      # congested branch ids
    statistic: float
    threshold: float
    detected: bool
    dof: int
    alpha: float

    def to_dict(self) -> dict:
        return {
            "x_hat_rad": self.x_hat.tolist(),
            "flows_mw": self.flows_mw.tolist(),
            "congestion_pattern": sorted(self.pattern),
            "statistic": self.statistic,
            "threshold": self.threshold,
            "detected": self.detected,
            "dof": self.dof,
            "alpha": self.alpha,
        }


def estimate(model: DcModel, z: np.ndarray, detector: DetectorConfig = DetectorConfig()) -> EstimateReport:
    """WLS estimate, congestion pattern, and detector verdict for one snapshot."""
    z = np.asarray(z, dtype=float)
    if z.shape != (model.m,):
        raise EstimationError(f"measurement vector has length {z.shape}, expected {model.m}")
    ops = operators(model)
    x_hat = ops.K @ z
    f_pu = model.F @ x_hat
    pattern = frozenset(
        k.id for r, k in enumerate(model.case.branches)
        if k.closed and k.limited and f_pu[r] >= model.limits_pu[r]
    )
    stat = ops.statistic(z)
    tau = detector_threshold(model.dof, detector.alpha)
    return EstimateReport(
        x_hat=x_hat,
        flows_mw=f_pu * model.case.base_mva,
        pattern=pattern,
        statistic=stat,
        threshold=tau,
        detected=bool(stat >= tau),
        dof=model.dof,
        alpha=detector.alpha,
    )


def topo_estimate(case: PowerCase, claimed_removed, z: np.ndarray,
                  detector: DetectorConfig = DetectorConfig(),
                  meters: MeterConfig | None = None) -> EstimateReport:
    """Estimate under the topology the control center believes in: breakers of
    `claimed_removed` open, measurement matrix rebuilt, same-length z."""
    claimed = apply_topology(case, claimed_removed)
    model = build_dc_model(claimed, meters)
    return estimate(model, z, detector)


# ---------------------------------------------------------------------------
# Chi-square threshold (no statistical library: integrated density + bisection)
# ---------------------------------------------------------------------------

_SIMPSON_N = 4096  # subintervals; even


def _chi2_cdf(x: float, dof: int) -> float:
    """P(chi2_dof <= x) by composite Simpson in the substituted variable
    s = sqrt(t), which removes the dof=1 endpoint singularity."""
    if x <= 0.0:
        return 0.0
    lognorm = -math.lgamma(dof / 2.0) - (dof / 2.0) * math.log(2.0)

    def g(s: float) -> float:
        if s == 0.0:
            return 2.0 * math.exp(lognorm) if dof == 1 else 0.0
        t = s * s
        logpdf = (dof / 2.0 - 1.0) * math.log(t) - t / 2.0 + lognorm
        return 2.0 * s * math.exp(logpdf) if logpdf > -745.0 else 0.0

    b = math.sqrt(x)
    h = b / _SIMPSON_N
    acc = g(0.0) + g(b)
    for i in range(1, _SIMPSON_N):
        acc += (4.0 if i % 2 else 2.0) * g(i * h)
    return min(1.0, acc * h / 3.0)


@lru_cache(maxsize=256)
def detector_threshold(dof: int, alpha: float) -> float:
    """tau with P(chi2_dof >= tau) = alpha, to about 1e-9 in probability."""
    if dof < 1 or int(dof) != dof:
        raise EstimationError(f"detector dof must be a positive integer, got {dof}")
    if not 0.0 < alpha < 1.0:
        raise EstimationError(f"false-alarm probability must be in (0,1), got {alpha}")
    lo, hi = 0.0, float(dof) + 10.0
    while 1.0 - _chi2_cdf(hi, dof) > alpha:
        hi *= 2.0
        if hi > 1e9:
            raise EstimationError("chi-square threshold bracket failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 1.0 - _chi2_cdf(mid, dof) > alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)
