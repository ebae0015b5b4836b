import itertools

import numpy as np
import pytest

from lmpsim.cases import MarketConfig
from lmpsim.errors import PricingError
from lmpsim.pricing import PriceTable, price_metrics, solve_expost_lmp


def vertex_lp_oracle(c, A_eq, b_eq, A_ub, b_ub, lb, ub):
    """Brute-force small-LP solver: enumerate basic points (intersections of
    n active constraints drawn from equalities, inequality rows, and bounds),
    keep the feasible ones, take the best objective."""
    c = np.asarray(c, float)
    n = c.size
    rows = []
    if A_eq is not None:
        for r, b in zip(np.atleast_2d(A_eq), np.atleast_1d(b_eq)):
            rows.append((r, b, "eq"))
    if A_ub is not None:
        for r, b in zip(np.atleast_2d(A_ub), np.atleast_1d(b_ub)):
            rows.append((r, b, "ub"))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        rows.append((e.copy(), lb[i], "bound"))
        rows.append((e.copy(), ub[i], "bound"))
    eq_idx = [i for i, r in enumerate(rows) if r[2] == "eq"]
    other = [i for i, r in enumerate(rows) if r[2] != "eq"]
    best = None
    for extra in itertools.combinations(other, n - len(eq_idx)):
        idx = eq_idx + list(extra)
        A = np.array([rows[i][0] for i in idx])
        b = np.array([rows[i][1] for i in idx])
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, b)
        if np.any(x < lb - 1e-9) or np.any(x > ub + 1e-9):
            continue
        if A_eq is not None and not np.allclose(np.atleast_2d(A_eq) @ x, b_eq, atol=1e-9):
            continue
        if A_ub is not None and np.any(np.atleast_2d(A_ub) @ x > np.atleast_1d(b_ub) + 1e-9):
            continue
        val = c @ x
        if best is None or val < best - 1e-12:
            best = val
    return best


def t3_lp_data(model, pattern, load_bus_idx=None, delta=0.0):
    """Raw LP data for the T3 incremental market (canonical gen order)."""
    gens = sorted(model.case.market.generators, key=lambda g: (g.bus, g.offer))
    c = np.array([g.offer for g in gens])
    lb = np.array([g.dp_min for g in gens])
    ub = np.array([g.dp_max for g in gens])
    A_eq = np.ones((1, len(gens)))
    b_eq = np.array([0.0 if delta == 0.0 else delta])
    A_ub, b_ub = None, None
    if pattern:
        A_ub = []
        b_ub = []
        bus_cols = {b.id: j for j, b in enumerate(model.case.buses)}
        for k in sorted(pattern):
            arow = model.ptdf[model.branch_row(k)]
            A_ub.append([arow[bus_cols[g.bus]] for g in gens])
            rhs = 0.0
            if load_bus_idx is not None:
                rhs += arow[load_bus_idx] * delta
            b_ub.append(rhs)
        A_ub = np.array(A_ub)
        b_ub = np.array(b_ub)
    return c, A_eq, b_eq, A_ub, b_ub, lb, ub


def oracle_lmp(model, pattern, bus_idx, h=1e-5):
    """Finite difference of the enumeration oracle's optimum w.r.t. load."""
    up = vertex_lp_oracle(*t3_lp_data(model, pattern, bus_idx, +h))
    dn = vertex_lp_oracle(*t3_lp_data(model, pattern, bus_idx, -h))
    return (up - dn) / (2 * h)


def test_t3_congested_lmp_matches_enumeration_oracle(t3_model):
    sol = solve_expost_lmp(t3_model.case.market, t3_model, {2})
    # frozen from the oracle below: lambda = (10, 20, 30), importer pays most
    assert sol.lmp == pytest.approx([10.0, 20.0, 30.0])
    assert sol.eta == pytest.approx(10.0)
    assert sol.mu[2] == pytest.approx(30.0)
    assert sol.lmp[2] > sol.lmp[0]
    for j in range(3):
        assert oracle_lmp(t3_model, {2}, j) == pytest.approx(sol.lmp_preclamp[j], rel=1e-5, abs=1e-5)
    assert vertex_lp_oracle(*t3_lp_data(t3_model, {2})) == pytest.approx(sol.objective, abs=1e-9)


def test_t3_uncongested_flat_price(t3_model):
    sol = solve_expost_lmp(t3_model.case.market, t3_model, set())
    assert sol.mu == {}
    assert np.allclose(sol.lmp, sol.eta)
    assert sol.eta == pytest.approx(20.0)  # cheap unit pegged at +0.1, next offer marginal
    assert vertex_lp_oracle(*t3_lp_data(t3_model, set())) == pytest.approx(sol.objective, abs=1e-9)


def test_ieee14_uncongested_eta_is_a_market_offer(ieee14_model):
    sol = solve_expost_lmp(ieee14_model.case.market, ieee14_model, set())
    offers = {g.offer for g in ieee14_model.case.market.generators}
    assert sol.eta in offers
    assert np.allclose(sol.lmp, sol.eta)


def test_lambda_invariant_to_generator_order(ieee14_model):
    market = ieee14_model.case.market
    shuffled = MarketConfig(
        generators=tuple(reversed(market.generators)),
        dispatchable_loads=market.dispatchable_loads,
        price_caps=market.price_caps,
    )
    for pattern in [set(), {3}, {3, 11}, {7}]:
        a = solve_expost_lmp(market, ieee14_model, pattern)
        b = solve_expost_lmp(shuffled, ieee14_model, pattern)
        assert np.array_equal(a.lmp, b.lmp)


def test_duals_complementary_slackness(ieee14_model):
    model = ieee14_model
    gens = sorted(model.case.market.generators, key=lambda g: (g.bus, g.offer, g.capacity))
    bus_cols = {b.id: j for j, b in enumerate(model.case.buses)}
    for pattern in [{3}, {7}, {11}, {3, 7}, {3, 7, 11}]:
        sol = solve_expost_lmp(model.case.market, model, pattern)
        for k in sorted(pattern):
            arow = model.ptdf[model.branch_row(k)]
            incflow = sum(arow[bus_cols[g.bus]] * dp for g, dp in zip(gens, sol.dp))
            assert incflow <= 1e-7
            assert sol.mu[k] >= -1e-9
            assert abs(sol.mu[k] * incflow) < 1e-6


def test_envelope_finite_difference(ieee14_model):
    """Perturbing the load at a bus moves the optimum by lambda_i * delta
    (nondegenerate instances, pre-clamp prices)."""
    model = ieee14_model
    market = model.case.market
    rng = np.random.default_rng(14)
    checked = 0
    trials = 0
    while checked < 20 and trials < 200:
        trials += 1
        pattern = {k for k in (3, 7, 11) if rng.random() < 0.5}
        sol = solve_expost_lmp(market, model, pattern)
        if sol.degenerate:
            continue
        bus_idx = int(rng.integers(0, 14))
        h = 1e-3
        up = solve_expost_lmp(market, model, pattern, load_perturbation=(bus_idx, +h))
        dn = solve_expost_lmp(market, model, pattern, load_perturbation=(bus_idx, -h))
        fd = (up.objective - dn.objective) / (2 * h)
        lam = sol.lmp_preclamp[bus_idx]
        assert fd == pytest.approx(lam, rel=0.01, abs=1e-6), (pattern, bus_idx)
        checked += 1
    assert checked == 20


def test_price_caps_clamp():
    from lmpsim.cases import Bus, Branch, Generator, PowerCase

    market = MarketConfig(
        generators=(Generator(bus=1, offer=10.0, capacity=50.0),
                    Generator(bus=2, offer=2000.0, capacity=50.0)),
        price_caps=(-100.0, 500.0),
    )
    case = PowerCase(
        name="cap2", buses=(Bus(1), Bus(2, load=10.0)),
        branches=(Branch(1, 1, 2, 0.1, limit=5.0),),
        market=market, reference_bus=1,
    )
    from lmpsim.network import build_dc_model

    model = build_dc_model(case)
    sol = solve_expost_lmp(market, model, {1})
    assert sol.lmp_preclamp[1] == pytest.approx(2000.0)
    assert sol.lmp[1] == 500.0


def test_pattern_validation_and_errors(t3_model):
    with pytest.raises(PricingError, match="not a subset"):
        solve_expost_lmp(t3_model.case.market, t3_model, {1})  # branch 1 unlimited
    nogen = MarketConfig(generators=())
    with pytest.raises(PricingError):
        solve_expost_lmp(nogen, t3_model, set())


def test_price_table_caches(t3_model):
    table = PriceTable(t3_model.case.market, t3_model)
    a = table.price(frozenset({2}))
    b = table.price(frozenset({2}))
    assert a is b
    assert table.price(frozenset()) is table.price(frozenset())


def test_price_metrics_spec_examples():
    m = price_metrics([[20.0]], [[30.0]], bus_ids=[1])
    assert m.rpp[1] == pytest.approx(0.5)
    assert m.arpp == pytest.approx(0.5)

    base = np.full((5, 3), 25.0)
    m2 = price_metrics(base, base, bus_ids=[1, 2, 3])
    assert m2.arpp == 0.0

    base3 = np.array([[20.0, 1e-9], [20.0, 1e-9]])
    pert3 = np.array([[30.0, 5.0], [10.0, 5.0]])
    m3 = price_metrics(base3, pert3, bus_ids=[1, 2])
    assert m3.excluded_buses == [2]
    assert m3.rpp[1] == pytest.approx(0.5)
    assert m3.arpp == pytest.approx(0.5)


def test_price_metrics_validation():
    with pytest.raises(PricingError):
        price_metrics(np.zeros((0, 2)), np.zeros((0, 2)), bus_ids=[1, 2])
    with pytest.raises(PricingError):
        price_metrics(np.zeros((2, 2)), np.zeros((2, 3)), bus_ids=[1, 2])
