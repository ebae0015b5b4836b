"""Acceptance suite: every release-gating check, one test per criterion,
each printing a PASS line (run with -s to watch them stream).

Heavier criteria run four-digit Monte Carlo trials; the whole module is
budgeted to finish in well under the stated per-criterion limits on stock
hardware. Seeds are fixed: results are reproducible bit-for-bit.
"""

import time

import numpy as np
import pytest

from lmpsim.attacks.meter import SuspectSpace, center_attack, m3_attack
from lmpsim.attacks.topology import Capabilities, feasible_targets, line_removal_attack
from lmpsim.cases import build_measurement_model, load_case, suspects_for_lines, t3_case
from lmpsim.estimation import detector_threshold, estimate, operators, topo_estimate
from lmpsim.harness import AttackSpec, ScenarioConfig, compare_search_methods, run_scenario
from lmpsim.network import apply_topology, build_dc_model, day_ahead_state, injections_to_state
from lmpsim.pricing import PriceTable, solve_expost_lmp
from lmpsim.regions import region_of_state

from test_meter_attacks import grid_cd_oracle


def _report(name, detail=""):
    print(f"ACCEPTANCE {name}: PASS {detail}")


def test_criterion_01_operator_identities():
    """KH = I, UH = 0, WH = 0 at 1e-8 on the 14- and 118-bus models, < 1 s."""
    t0 = time.perf_counter()
    for name in ("ieee14", "case118"):
        case, meters = load_case(name)
        model = build_dc_model(case, meters)   # fresh instances: no warm cache
        ops = operators(model)
        assert np.max(np.abs(ops.K @ model.H - np.eye(model.n))) <= 1e-8, name
        assert np.max(np.abs(ops.U @ model.H)) <= 1e-8, name
        assert np.max(np.abs(ops.W @ model.H)) <= 1e-8, name
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0, f"operator construction took {elapsed:.2f}s"
    _report("01 operator-identities", f"({elapsed * 1e3:.0f} ms)")


def test_criterion_02_detector_calibration():
    """Null scenario, 1e4 DC trials, alpha = 0.1: rate in [0.091, 0.109], < 30 s."""
    t0 = time.perf_counter()
    cfg = ScenarioConfig(case="ieee14", trials=10_000, seed=2026, attack=AttackSpec(kind="none"))
    res = run_scenario(cfg)
    elapsed = time.perf_counter() - t0
    rate = res.points[0].detection_probability
    assert 0.091 <= rate <= 0.109, rate
    assert elapsed < 30.0, f"{elapsed:.1f}s"
    _report("02 detector-calibration", f"(rate={rate:.4f}, {elapsed:.1f}s)")


def test_criterion_03_attack_linearity():
    """x_hat(z+a) - x_hat(z) = Ka to 1e-10 for 100 random a, on and off S."""
    case, meters = load_case("ieee14")
    model = build_dc_model(case, meters)
    ops = operators(model)
    rng = np.random.default_rng(3)
    x = rng.normal(0, 0.01, size=model.n)
    z = model.H @ x + rng.normal(0, meters.noise_std)
    worst = 0.0
    for _ in range(100):
        a = rng.normal(0, 0.5, size=model.m)
        if rng.random() < 0.5:
            a[rng.random(model.m) < 0.7] = 0.0  # sparse, suspect-like support
        shift = estimate(model, z + a).x_hat - estimate(model, z).x_hat
        worst = max(worst, float(np.max(np.abs(shift - ops.K @ a))))
    assert worst <= 1e-10, worst
    _report("03 attack-linearity", f"(max dev {worst:.2e})")


def test_criterion_04_sampled_price_partition():
    """1e3 random states: equal region implies an identical clamped price
    vector; the counterexample search comes back empty."""
    case, meters = load_case("ieee14")
    model = build_dc_model(case, meters)
    table = PriceTable(case.market, model)
    x0 = day_ahead_state(case)
    rng = np.random.default_rng(4)
    by_region: dict = {}
    counterexamples = []
    for _ in range(1000):
        x = x0 + rng.normal(0, 0.02, size=model.n)
        pat = region_of_state(model, x)
        sol = table.price(pat)
        if sol is None:
            continue
        key = tuple(sorted(pat))
        if key in by_region:
            if not np.array_equal(by_region[key], sol.lmp):
                counterexamples.append(key)
        else:
            by_region[key] = sol.lmp.copy()
    assert counterexamples == []
    assert len(by_region) >= 2  # the sample actually straddles regions
    _report("04 price-partition", f"({len(by_region)} regions sampled)")


def test_criterion_05_envelope_check():
    """20 nondegenerate pricing instances: d(optimum)/d(load at bus i)
    matches the pre-clamp price within 1%."""
    case, meters = load_case("ieee14")
    model = build_dc_model(case, meters)
    rng = np.random.default_rng(5)
    checked = 0
    attempts = 0
    while checked < 20 and attempts < 300:
        attempts += 1
        pattern = {k for k in (3, 7, 11) if rng.random() < 0.5}
        sol = solve_expost_lmp(case.market, model, pattern)
        if sol.degenerate:
            continue
        bus = int(rng.integers(0, 14))
        h = 1e-3
        up = solve_expost_lmp(case.market, model, pattern, load_perturbation=(bus, +h))
        dn = solve_expost_lmp(case.market, model, pattern, load_perturbation=(bus, -h))
        fd = (up.objective - dn.objective) / (2 * h)
        assert fd == pytest.approx(sol.lmp_preclamp[bus], rel=0.01, abs=1e-6), (pattern, bus)
        checked += 1
    assert checked == 20
    _report("05 envelope-check", f"({checked} instances)")


def test_criterion_06_convex_attack_optimality():
    """T3: centering margin within 1% of the grid/descent oracle; fully
    adaptive feasibility verdicts match a convex oracle on 50 random targets."""
    case, meters = t3_case()
    model = build_dc_model(case, meters)
    suspects = SuspectSpace.from_meters(suspects_for_lines(case, meters, [2]))
    anchor = injections_to_state(case, np.array([27.0, 0.0, -27.0]))
    for eps in (8.0, 16.0, 40.0):
        res = center_attack(model, {2}, anchor, suspects, epsilon=eps)
        assert res.feasible
        b_oracle, _ = grid_cd_oracle(model, {2}, anchor, suspects, eps)
        assert res.beta_mw / 100.0 == pytest.approx(b_oracle, rel=0.01, abs=1e-5), eps

    # m3 verdict agreement, oracle = SLSQP minimization of the statistic
    from scipy.optimize import minimize

    ops = operators(model)
    tau = detector_threshold(model.dof, 0.1)
    rng = np.random.default_rng(6)
    agreements = 0
    for trial in range(50):
        x = rng.normal(0, 0.02, size=model.n)
        z = model.H @ x + rng.normal(0, meters.noise_std)
        lines = [2] if rng.random() < 0.7 else [int(rng.integers(1, 4))]
        ss = SuspectSpace.from_meters(suspects_for_lines(case, meters, lines))
        pattern = {2} if rng.random() < 0.5 else set()
        res = m3_attack(model, z, pattern, ss, tau, early_abort=False)

        S = list(ss.indices)
        Wss = ops.W[np.ix_(S, S)]
        wz = (ops.W @ z)[S]
        base = float(z @ ops.W @ z)
        Gs = (model.F @ ops.K)[:, S]
        fz = model.F @ (ops.K @ z)
        cons = []
        for kid in model.limited_branch_ids:
            r = model.branch_row(kid)
            T = model.limits_pu[r]
            if kid in pattern:
                cons.append({"type": "ineq", "fun": lambda a, r=r, T=T: fz[r] + Gs[r] @ a - T})
            else:
                cons.append({"type": "ineq",
                             "fun": lambda a, r=r, T=T: T - 1e-8 - fz[r] - Gs[r] @ a})
        best = np.inf
        for start in (np.zeros(len(S)), rng.normal(0, 0.1, len(S))):
            sol = minimize(lambda a: a @ Wss @ a + 2 * wz @ a + base, start,
                           constraints=cons, method="SLSQP",
                           options={"maxiter": 500, "ftol": 1e-12})
            if sol.success and (not cons or min(c["fun"](sol.x) for c in cons) > -1e-9):
                best = min(best, float(sol.fun))
        oracle_feasible = best <= tau + 1e-8
        assert res.feasible == oracle_feasible, trial
        agreements += 1
    assert agreements == 50
    _report("06 convex-attack-optimality", "(3 budgets + 50 verdicts)")


def test_criterion_07_topology_attack_exactness():
    """Noiseless: consistency to 1e-10 on every feasible removal. Noisy: a
    pseudo-measurement-grade metering profile (flow 0.01 / injection 0.05
    p.u.), 1e4 trials per network, detection within 3 sigma of alpha."""
    # noiseless exactness
    for name in ("t3", "ieee14"):
        case, meters = load_case(name)
        model = build_dc_model(case, meters)
        caps = Capabilities.for_lines(case, meters, [k.id for k in case.closed_branches])
        rng = np.random.default_rng(7)
        x = rng.normal(0, 0.02, size=model.n)
        z = model.H @ x
        targets = feasible_targets(case, meters, caps, max_removals=2)
        assert targets
        for removed in targets[: 12]:
            plan = line_removal_attack(case, meters, z, removed, caps)
            rep = topo_estimate(case, removed, z + plan.a)
            assert rep.statistic <= 1e-10, (name, removed)
            assert np.max(np.abs(rep.x_hat - x)) <= 1e-10, (name, removed)

    # noisy detection-rate equivalence
    alpha, N = 0.1, 10_000
    band = 3 * np.sqrt(alpha * (1 - alpha) / N)
    rates = {}
    for name, max_rm in (("t3", 1), ("ieee14", 2)):
        case, meters0 = load_case(name)
        noise = np.array([0.05 if mt.kind == "injection" else 0.01 for mt in meters0.meters])
        meters = build_measurement_model(case, noise=noise)
        model = build_dc_model(case, meters)
        caps = Capabilities.for_lines(case, meters, [k.id for k in case.closed_branches])
        targets = feasible_targets(case, meters, caps, max_removals=max_rm)
        claimed = {}
        for removed in targets:
            cmodel = build_dc_model(apply_topology(case, removed), meters)
            claimed[removed] = (operators(cmodel), detector_threshold(cmodel.dof, alpha))
        x0 = day_ahead_state(case)
        rng = np.random.default_rng(77)
        hits = 0
        for _ in range(N):
            x = x0 + rng.normal(0, 0.01, size=model.n)
            z = model.H @ x + rng.normal(0, meters.noise_std)
            removed = targets[int(rng.integers(0, len(targets)))]
            plan = line_removal_attack(case, meters, z, removed, caps)
            ops_c, tau = claimed[removed]
            za = z + plan.a
            hits += float(za @ ops_c.W @ za) >= tau
        rates[name] = hits / N
        assert abs(rates[name] - alpha) < band, (name, rates[name])
    _report("07 topology-exactness",
            f"(rates t3={rates['t3']:.4f}, ieee14={rates['ieee14']:.4f}, band ±{band:.4f})")


def test_criterion_08_qualitative_ordering():
    """1000-trial matched 14-bus scenarios: ARPP(m1) <= ARPP(m2) <= ARPP(m3)
    < ARPP(topology), topology >= 20%; all four runs inside 10 minutes."""
    t0 = time.perf_counter()
    arpp = {}
    detect = {}
    for kind, extra in (("m1", {"epsilon": [10.0]}), ("m2", {"epsilon": [10.0]}),
                        ("m3", {}), ("topology", {"max_removals": 2})):
        cfg = ScenarioConfig(case="ieee14", trials=1000, seed=42,
                             attack=AttackSpec(kind=kind, suspects="random-lines:2", **extra))
        p = run_scenario(cfg).points[0]
        arpp[kind] = p.arpp
        detect[kind] = p.detection_probability
    elapsed = time.perf_counter() - t0
    assert arpp["m1"] <= arpp["m2"] <= arpp["m3"] < arpp["topology"], arpp
    assert arpp["topology"] >= 0.20, arpp["topology"]
    assert elapsed < 600.0, f"{elapsed:.0f}s"
    _report("08 qualitative-ordering",
            f"(m1={arpp['m1']:.4f} m2={arpp['m2']:.4f} m3={arpp['m3']:.4f} "
            f"topo={arpp['topology']:.4f}, {elapsed:.0f}s)")


def test_criterion_09_greedy_vs_exhaustive():
    """118-bus scenario, <= 10 candidate lines (cap 5): 1000 trials, greedy
    finds the exhaustive pattern >= 90% of the time and is faster on average."""
    cfg = ScenarioConfig(case="case118", trials=1000, seed=42, candidate_cap=5,
                         attack=AttackSpec(kind="m3", suspects="random-limited-lines:3"))
    report, timing = compare_search_methods(cfg)
    assert report["agreement_rate"] >= 0.90, report["agreement_rate"]
    assert timing["greedy_mean_s"] < timing["exhaustive_mean_s"], timing
    _report("09 greedy-vs-exhaustive",
            f"(agreement={report['agreement_rate']:.3f}, "
            f"greedy {timing['greedy_mean_s'] * 1e3:.1f} ms < "
            f"exhaustive {timing['exhaustive_mean_s'] * 1e3:.1f} ms)")


def test_criterion_10_ac_attenuation():
    """DC-designed meter attacks lose potency through the nonlinear pipeline;
    topology attacks keep at least half their DC-pipeline ARPP."""
    trials = 400
    arpp = {}
    for backend in ("dc", "ac"):
        for kind, extra in (("m1", {"epsilon": [40.0]}), ("m2", {"epsilon": [10.0]}),
                            ("topology", {"max_removals": 2})):
            cfg = ScenarioConfig(case="ieee14", model=backend, trials=trials, seed=1234,
                                 attack=AttackSpec(kind=kind, suspects="random-lines:2", **extra))
            arpp[backend, kind] = run_scenario(cfg).points[0].arpp
    assert arpp["dc", "m1"] > 0.0 and arpp["dc", "m2"] > 0.0  # non-vacuous comparison
    assert arpp["ac", "m1"] <= arpp["dc", "m1"] + 1e-12, (arpp["ac", "m1"], arpp["dc", "m1"])
    assert arpp["ac", "m2"] <= arpp["dc", "m2"] + 1e-12, (arpp["ac", "m2"], arpp["dc", "m2"])
    assert arpp["ac", "topology"] >= 0.5 * arpp["dc", "topology"], (
        arpp["ac", "topology"], arpp["dc", "topology"])
    assert arpp["dc", "topology"] > 0.0
    _report("10 ac-attenuation",
            f"(m1 {arpp['dc', 'm1']:.4f}->{arpp['ac', 'm1']:.4f}, "
            f"m2 {arpp['dc', 'm2']:.4f}->{arpp['ac', 'm2']:.4f}, "
            f"topo {arpp['dc', 'topology']:.4f}->{arpp['ac', 'topology']:.4f})")


def test_criterion_11_determinism():
    """Same config and seed: byte-identical results.json (and CSVs)."""
    for attack in (AttackSpec(kind="m3", suspects="random-lines:2"),
                   AttackSpec(kind="topology", suspects="random-lines:2", max_removals=2)):
        cfg1 = ScenarioConfig(case="ieee14", trials=120, seed=99, attack=attack)
        cfg2 = ScenarioConfig(case="ieee14", trials=120, seed=99, attack=attack)
        a = run_scenario(cfg1)
        b = run_scenario(cfg2)
        assert a.to_json().encode() == b.to_json().encode()
        assert a.trials_csv() == b.trials_csv()
        assert a.curve_csv() == b.curve_csv()
    _report("11 determinism", "(m3 + topology reruns byte-identical)")
