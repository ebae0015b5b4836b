"""Monte Carlo engine: detection-probability / price-perturbation curves for
the attack models, plus the greedy-vs-exhaustive search comparison.

Each trial draws a state from the prior, synthesizes measurements (DC or AC
backend), constructs the configured attack, runs estimation and the residual
detector, and prices attacked vs paired no-attack snapshots. Results are a
pure function of (config, seed): every trial gets its own substream seeded by
(root seed, trial index), and wall-clock timing never enters results payloads.
"""

from __future__ import annotations

import json
import multiprocessing
import time
from dataclasses import dataclass, field

import numpy as np

from .acmodel import AcState, ac_measurements, ac_wls_estimate
from .attacks.meter import SuspectSpace, mmse_state, worst_meter_attack
from .attacks.topology import Capabilities, TopologyEvaluator, worst_topology_attack
from .cases import StatePrior, build_measurement_model, load_case, suspects_for_lines
from .errors import ConfigError, ConvergenceError
from .estimation import DetectorConfig, detector_threshold, estimate, operators
from .network import build_dc_model, day_ahead_state
from .pricing import PriceTable, price_metrics
from .regions import DEFAULT_CANDIDATE_CAP, candidate_patterns

MAGNITUDE_STD = 0.01  # AC backend: voltage magnitudes ~ N(1, 0.01^2)


@dataclass
class AttackSpec:
    kind: str = "none"                  # none | m1 | m2 | m3 | topology
    epsilon: list[float] = field(default_factory=list)   # m1/m2 budget grid
    suspects: str = "random-lines:2"    # random-lines:K | lines:<ids> | all
    search: str = "exhaustive"          # exhaustive | greedy
    max_removals: int = 2               # topology
    observed_fraction: float = 0.5      # m2: fraction of meters the MiM sees

    def validate(self):
        if self.kind not in ("none", "m1", "m2", "m3", "topology"):
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if self.kind in ("m1", "m2"):
            if not self.epsilon:
                raise ConfigError(f"attack {self.kind} needs a nonempty epsilon grid")
            eps = list(self.epsilon)
            if any(e <= 0 for e in eps) or any(b <= a for a, b in zip(eps, eps[1:])):
                raise ConfigError("epsilon grid must be positive and increasing")
        if self.search not in ("exhaustive", "greedy"):
            raise ConfigError(f"unknown search {self.search!r}")


@dataclass
class ScenarioConfig:
    case: str = "ieee14"
    model: str = "dc"                   # dc | ac
    trials: int = 1000
    seed: int = 0
    alpha: float = 0.1
    attack: AttackSpec = field(default_factory=AttackSpec)
    candidate_threshold_mw: float = 10.0
    candidate_cap: int = DEFAULT_CANDIDATE_CAP
    load_scale: float = 1.0
    noise_std: float | dict = 0.01      # scalar p.u., or {"flow": s, "injection": s}
    prior_sigma: float = 0.01           # rad
    workers: int = 1                    # trial-level worker processes

    def validate(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must be in (0,1)")
        if self.model not in ("dc", "ac"):
            raise ConfigError(f"unknown model {self.model!r}")
        self.attack.validate()

    @staticmethod
    def from_json(text: str) -> "ScenarioConfig":
        doc = json.loads(text)
        attack = AttackSpec(**doc.pop("attack", {}))
        cfg = ScenarioConfig(attack=attack, **doc)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["attack"] = dict(self.attack.__dict__)
        return d


@dataclass
class CurvePoint:
    epsilon: float | None
    detection_probability: float
    arpp: float
    trials: int
    undetected_trials: int
    excluded_buses: list[int]
    rpp: dict[int, float]


@dataclass
class ExperimentResult:
    config: dict
    points: list[CurvePoint]
    trial_rows: list[dict]              # per (point, trial) log
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "points": [
                {
                    "epsilon": p.epsilon,
                    "detection_probability": p.detection_probability,
                    "arpp": p.arpp,
                    "trials": p.trials,
                    "undetected_trials": p.undetected_trials,
                    "excluded_buses": p.excluded_buses,
                    "rpp": {str(k): v for k, v in sorted(p.rpp.items())},
                }
                for p in self.points
            ],
            "notes": self.notes,
        }
        return json.dumps(payload, indent=1, sort_keys=True)

    def trials_csv(self) -> str:
        lines = ["point,trial,epsilon,detected,statistic,trial_rpp"]
        for row in self.trial_rows:
            eps = "" if row["epsilon"] is None else repr(row["epsilon"])
            rpp = "" if row["trial_rpp"] is None else repr(row["trial_rpp"])
            lines.append(
                f'{row["point"]},{row["trial"]},{eps},{int(row["detected"])},'
                f'{row["statistic"]!r},{rpp}'
            )
        return "\n".join(lines) + "\n"

    def curve_csv(self) -> str:
        lines = ["epsilon,detection_probability,arpp"]
        for p in self.points:
            eps = "" if p.epsilon is None else repr(p.epsilon)
            lines.append(f"{eps},{p.detection_probability!r},{p.arpp!r}")
        return "\n".join(lines) + "\n"


class _ScenarioContext:
    """Everything derivable from the config once, shared across trials."""

    def __init__(self, config: ScenarioConfig):
        config.validate()
        self.config = config
        case, meters = load_case(config.case)
        if config.load_scale != 1.0:
            case = case.scale_loads(config.load_scale)
        noise = config.noise_std
        if isinstance(noise, dict):
            # per-meter-type profile: {"injection": s, "flow": s}
            std = np.array([float(noise.get(mt.kind, 0.01)) for mt in meters.meters])
        else:
            std = float(noise)
        self.meters = build_measurement_model(case, noise=std)
        self.case = case
        self.model = build_dc_model(case, self.meters)
        self.detector = DetectorConfig(alpha=config.alpha)
        x0 = day_ahead_state(case)
        self.prior = StatePrior(mean=x0, covariance=config.prior_sigma**2 * np.eye(self.model.n))
        self.base_table = PriceTable(case.market, self.model)
        self.topo = TopologyEvaluator(case, self.meters, self.model, self.detector)
        self.ops = operators(self.model)
        self.tau = detector_threshold(self.model.dof, config.alpha)
        self.m1_cache: dict = {}
        # m2: uniformly spaced half (or configured fraction) of the meters
        take = max(1, int(round(1.0 / max(config.attack.observed_fraction, 1e-9))))
        self.observed_idx = np.arange(0, self.meters.m, take)
        self.bus_ids = [b.id for b in case.buses]

    # -- per-trial draws (order fixed: state, magnitudes, noise, lines) ----
    def draw(self, trial: int):
        rng = np.random.default_rng((self.config.seed, trial))
        x = self.prior.mean + rng.normal(0.0, self.config.prior_sigma, size=self.model.n)
        if self.config.model == "ac":
            V = 1.0 + rng.normal(0.0, MAGNITUDE_STD, size=len(self.case.buses))
            V = np.maximum(V, 0.5)
        else:
            V = None
        w = rng.normal(0.0, self.meters.noise_std)
        lines = self._draw_lines(rng)
        return x, V, w, lines

    def _draw_lines(self, rng):
        spec = self.config.attack.suspects
        closed = sorted(k.id for k in self.case.closed_branches)
        if spec.startswith("random-lines:"):
            kcount = int(spec.split(":", 1)[1])
            return sorted(int(i) for i in rng.choice(closed, size=min(kcount, len(closed)), replace=False))
        if spec.startswith("random-limited-lines:"):
            # draw from the congestion-prone (limited) lines so the adversary
            # has leverage on the candidate patterns
            kcount = int(spec.split(":", 1)[1])
            pool = sorted(self.model.limited_branch_ids)
            return sorted(int(i) for i in rng.choice(pool, size=min(kcount, len(pool)), replace=False))
        if spec.startswith("lines:"):
            return sorted(int(t) for t in spec.split(":", 1)[1].split(",") if t)
        if spec == "all":
            return closed
        raise ConfigError(f"unknown suspects selector {spec!r}")

    def synthesize(self, x, V, w):
        """Measurement vector for a drawn state (dead meters read exactly 0)."""
        if self.config.model == "ac":
            ref = next(i for i, b in enumerate(self.case.buses) if b.id == self.case.reference_bus)
            th = np.zeros(len(self.case.buses))
            free = [i for i in range(len(self.case.buses)) if i != ref]
            th[free] = x
            z = ac_measurements(self.case, self.meters, AcState(V, th))
        else:
            z = self.model.H @ x
        z = z + w
        z[~self.model.active_meters] = 0.0
        return z

    def full_estimate(self, z, removed=frozenset(), V=None):
        """Estimate under the claimed topology with the configured backend.
        Returns (report, priced_table); ConvergenceError means detection."""
        removed = frozenset(removed)
        if removed:
            cmodel, ctable = self.topo.claimed(removed)
        else:
            cmodel, ctable = self.model, self.base_table
        if self.config.model == "ac":
            _, report = ac_wls_estimate(cmodel.case, self.meters, z, V, self.detector)
            return report, ctable
        return estimate(cmodel, z, self.detector), ctable


def run_scenario(config: ScenarioConfig) -> ExperimentResult:
    ctx = _ScenarioContext(config)
    attack = config.attack
    if attack.kind in ("m1", "m2"):
        eps_points: list[float | None] = list(attack.epsilon)
    else:
        eps_points = [None]

    points: list[CurvePoint] = []
    rows: list[dict] = []
    notes: list[str] = []
    for p_idx, eps in enumerate(eps_points):
        bases, perts = [], []
        detected_count = 0
        outs = _run_point(ctx, config, eps)
        for t, out in enumerate(outs):
            detected_count += out["detected"]
            rows.append({"point": p_idx, "trial": t, "epsilon": eps, **{
                k: out[k] for k in ("detected", "statistic", "trial_rpp")}})
            if not out["detected"] and out["lmp_pair"] is not None:
                lam, lam_a = out["lmp_pair"]
                bases.append(lam)
                perts.append(lam_a)
        if bases:
            pm = price_metrics(np.array(bases), np.array(perts), ctx.bus_ids)
            arpp, rpp, excl = pm.arpp, pm.rpp, pm.excluded_buses
        else:
            arpp, rpp, excl = 0.0, {}, []
            notes.append(f"point {p_idx}: no undetected priced trials")
        points.append(CurvePoint(
            epsilon=eps,
            detection_probability=detected_count / config.trials,
            arpp=arpp,
            trials=config.trials,
            undetected_trials=len(bases),
            excluded_buses=excl,
            rpp=rpp,
        ))
    return ExperimentResult(config=config.to_dict(), points=points, trial_rows=rows, notes=notes)


_WORKER_CTX: _ScenarioContext | None = None


def _worker_init(config_json: str):
    global _WORKER_CTX
    _WORKER_CTX = _ScenarioContext(ScenarioConfig.from_json(config_json))


def _worker_trial(args):
    t, eps = args
    return _run_trial(_WORKER_CTX, t, eps)


def _run_point(ctx: _ScenarioContext, config: ScenarioConfig, eps):
    """All trials of one curve point; results are trial-indexed regardless of
    worker scheduling (per-trial substreams make parallel == serial)."""
    if config.workers <= 1:
        return [_run_trial(ctx, t, eps) for t in range(config.trials)]
    mp_ctx = multiprocessing.get_context("fork")
    with mp_ctx.Pool(config.workers, initializer=_worker_init,
                     initargs=(json.dumps(config.to_dict()),)) as pool:
        chunk = max(1, config.trials // (config.workers * 4))
        return pool.map(_worker_trial, [(t, eps) for t in range(config.trials)], chunksize=chunk)


def _run_trial(ctx: _ScenarioContext, t: int, eps: float | None) -> dict:
    config = ctx.config
    attack = config.attack
    x, V, w, lines = ctx.draw(t)
    z = ctx.synthesize(x, V, w)

    removed = frozenset()
    plan_a = np.zeros(ctx.meters.m)
    if attack.kind != "none":
        suspects = SuspectSpace.from_meters(suspects_for_lines(ctx.case, ctx.meters, lines))
        if attack.kind == "topology":
            caps = Capabilities.for_lines(ctx.case, ctx.meters, lines)
            plan, _ = worst_topology_attack(ctx.topo, z, caps, attack.max_removals)
            if plan.feasible:
                removed = plan.removed
                plan_a = plan.a
        else:
            plan = _meter_plan(ctx, attack, suspects, z, eps)
            if plan is not None and plan.feasible:
                plan_a = plan.a
    za = z + plan_a

    # baseline (no attack) pipeline on the same draw
    try:
        base_report, base_table = ctx.full_estimate(z, V=V)
        lam_base = base_table.price(base_report.pattern)
    except ConvergenceError:
        lam_base = None

    attacked_same = not removed and not np.any(plan_a)
    try:
        if attacked_same and lam_base is not None:
            report, lam = base_report, lam_base
        else:
            report, table = ctx.full_estimate(za, removed, V=V)
            lam = table.price(report.pattern)
        detected = report.detected
        statistic = report.statistic
    except ConvergenceError:
        detected, statistic, lam = True, float("inf"), None

    trial_rpp = None
    lmp_pair = None
    if not detected and lam is not None and lam_base is not None:
        valid = np.abs(lam_base.lmp) >= 1e-6
        if np.any(valid):
            rel = np.abs(lam.lmp[valid] - lam_base.lmp[valid]) / np.abs(lam_base.lmp[valid])
            trial_rpp = float(np.mean(rel))
        lmp_pair = (lam_base.lmp.copy(), lam.lmp.copy())
    return {"detected": bool(detected), "statistic": float(statistic),
            "trial_rpp": trial_rpp, "lmp_pair": lmp_pair}


def _meter_plan(ctx: _ScenarioContext, attack: AttackSpec, suspects: SuspectSpace,
                z: np.ndarray, eps: float | None):
    """Anchor flows pick the candidate patterns; the worst-attack search does
    the rest. m1 plans depend only on (suspect set, budget): cached."""
    if attack.kind == "m1":
        key = (suspects.indices, eps, attack.search)
        if key not in ctx.m1_cache:
            anchor = ctx.prior.mean
            cands = candidate_patterns(
                ctx.model, (ctx.model.F @ anchor) * ctx.case.base_mva,
                ctx.config.candidate_threshold_mw, ctx.config.candidate_cap)
            ctx.m1_cache[key] = worst_meter_attack(
                ctx.model, ctx.base_table, "m1", suspects, cands,
                anchor_x=anchor, epsilon=eps, search=attack.search)
        return ctx.m1_cache[key]
    if attack.kind == "m2":
        H0 = ctx.model.H[ctx.observed_idx]
        R0 = np.diag(ctx.meters.noise_std[ctx.observed_idx] ** 2)
        anchor = mmse_state(ctx.prior, H0, z[ctx.observed_idx], R0)
        cands = candidate_patterns(
            ctx.model, (ctx.model.F @ anchor) * ctx.case.base_mva,
            ctx.config.candidate_threshold_mw, ctx.config.candidate_cap)
        return worst_meter_attack(ctx.model, ctx.base_table, "m2", suspects, cands,
                                  anchor_x=anchor, epsilon=eps, search=attack.search)
    if attack.kind == "m3":
        f_hat = (ctx.model.F @ (ctx.ops.K @ z)) * ctx.case.base_mva
        cands = candidate_patterns(ctx.model, f_hat,
                                   ctx.config.candidate_threshold_mw, ctx.config.candidate_cap)
        return worst_meter_attack(ctx.model, ctx.base_table, "m3", suspects, cands,
                                  z=z, tau=ctx.tau, search=attack.search)
    raise ConfigError(f"unknown meter attack kind {attack.kind!r}")


def sweep_budget(config: ScenarioConfig, eps_grid=None) -> ExperimentResult:
    """Curve over the budget grid; identical per-trial draws at every point so
    the points are paired."""
    if eps_grid is not None:
        config.attack.epsilon = list(eps_grid)
    return run_scenario(config)


def compare_search_methods(config: ScenarioConfig):
    """Run the worst-pattern search both ways on identical trials.

    Returns (report, timing): the report is deterministic (agreement rate,
    per-trial patterns); timing holds wall-clock statistics and is excluded
    from determinism contracts."""
    ctx = _ScenarioContext(config)
    attack = config.attack
    if attack.kind not in ("m1", "m2", "m3"):
        raise ConfigError("search comparison needs a meter attack kind")
    eps = attack.epsilon[0] if attack.kind in ("m1", "m2") else None

    agree = 0
    t_ex, t_gr = [], []
    mismatches = []
    evals_ex, evals_gr = 0, 0
    for t in range(config.trials):
        spec_ex = AttackSpec(**{**attack.__dict__, "search": "exhaustive"})
        spec_gr = AttackSpec(**{**attack.__dict__, "search": "greedy"})
        x, V, w, lines = ctx.draw(t)
        z = ctx.synthesize(x, V, w)
        suspects = SuspectSpace.from_meters(suspects_for_lines(ctx.case, ctx.meters, lines))

        t0 = time.perf_counter()
        plan_ex = _meter_plan(ctx, spec_ex, suspects, z, eps)
        t1 = time.perf_counter()
        plan_gr = _meter_plan(ctx, spec_gr, suspects, z, eps)
        t2 = time.perf_counter()
        t_ex.append(t1 - t0)
        t_gr.append(t2 - t1)
        evals_ex += plan_ex.evaluations
        evals_gr += plan_gr.evaluations
        if plan_ex.pattern == plan_gr.pattern:
            agree += 1
        else:
            mismatches.append({"trial": t,
                               "exhaustive": sorted(plan_ex.pattern),
                               "greedy": sorted(plan_gr.pattern)})
    report = {
        "trials": config.trials,
        "agreement_rate": agree / config.trials,
        "mismatches": mismatches,
        "evaluations": {"exhaustive": evals_ex, "greedy": evals_gr},
    }
    timing = {
        "exhaustive_mean_s": float(np.mean(t_ex)),
        "exhaustive_std_s": float(np.std(t_ex)),
        "greedy_mean_s": float(np.mean(t_gr)),
        "greedy_std_s": float(np.std(t_gr)),
    }
    return report, timing
