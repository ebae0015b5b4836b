import json

import numpy as np
import pytest

from lmpsim.cases import (
    build_measurement_model,
    case_to_native_json,
    load_case,
    parse_case,
    suspects_for_lines,
    t3_case,
)
from lmpsim.errors import CaseError


def test_ieee14_parses_with_market_parameters(ieee14):
    case, meters = ieee14
    assert len(case.buses) == 14
    assert len(case.branches) == 20
    limited = {k.id: k.limit for k in case.branches if k.limited}
    assert limited == {3: 50.0, 7: 50.0, 11: 20.0}
    offers = {g.bus: g.offer for g in case.market.generators}
    assert offers == {1: 15.0, 2: 31.0, 3: 30.0, 6: 10.0, 8: 20.0}
    caps = {g.bus: g.capacity for g in case.market.generators}
    assert caps == {1: 330.0, 2: 140.0, 3: 100.0, 6: 100.0, 8: 100.0}
    assert case.market.price_caps == (-100.0, 500.0)
    assert meters.m == 14 + 2 * 20


def test_t3_fixture_shape(t3):
    case, meters = t3
    assert len(case.buses) == 3
    assert case.reference_bus == 1
    assert meters.m == 3 + 6 == 9
    assert [k.x for k in case.branches] == [0.1, 0.1, 0.1]
    assert case.branch_by_id(2).limit == 20.0


def test_branch_to_nonexistent_bus_rejected():
    doc = {
        "reference_bus": 1,
        "buses": [{"id": 1}, {"id": 2}],
        "branches": [{"id": 1, "from": 1, "to": 9, "x": 0.1}],
        "generators": [{"bus": 1, "offer": 10.0, "capacity": 10.0}],
    }
    with pytest.raises(CaseError, match="nonexistent bus"):
        parse_case(json.dumps(doc), "native")


def test_nonpositive_reactance_rejected():
    doc = {
        "reference_bus": 1,
        "buses": [{"id": 1}, {"id": 2}],
        "branches": [{"id": 1, "from": 1, "to": 2, "x": 0.0}],
        "generators": [{"bus": 1, "offer": 10.0, "capacity": 10.0}],
    }
    with pytest.raises(CaseError, match="reactance"):
        parse_case(json.dumps(doc), "native")


def test_disconnected_case_rejected():
    doc = {
        "reference_bus": 1,
        "buses": [{"id": 1}, {"id": 2}, {"id": 3}],
        "branches": [{"id": 1, "from": 1, "to": 2, "x": 0.1}],
        "generators": [{"bus": 1, "offer": 10.0, "capacity": 10.0}],
    }
    with pytest.raises(CaseError, match="not connected"):
        parse_case(json.dumps(doc), "native")


def test_meter_count_rule(ieee14):
    case, meters = ieee14
    assert meters.m == len(case.buses) + 2 * len(case.closed_branches)


def test_scalar_noise_builds_diagonal_covariance(t3):
    case, _ = t3
    mc = build_measurement_model(case, noise=0.01)
    R = mc.covariance
    assert R.shape == (9, 9)
    assert np.allclose(np.diag(R), 1e-4)
    assert np.count_nonzero(R - np.diag(np.diag(R))) == 0


def test_suspects_for_line_t3(t3):
    case, meters = t3
    s = suspects_for_lines(case, meters, [2])  # branch (1,3)
    labels = {meters.meters[i].label() for i in s}
    assert labels == {"inj:1", "inj:3", "flow:2:fwd", "flow:2:rev"}
    assert len(s) == 4


def test_roundtrip_native_serialization(ieee14):
    case, meters = ieee14
    text = case_to_native_json(case, meters)
    case2, meters2 = parse_case(text, "native")
    assert case2 == case
    assert [m.label() for m in meters2.meters] == [m.label() for m in meters.meters]
    assert np.array_equal(meters2.noise_std, meters.noise_std)


def test_meter_ordering_is_canonical(t3):
    case, meters = t3
    labels = [m.label() for m in meters.meters]
    assert labels == [
        "inj:1", "inj:2", "inj:3",
        "flow:1:fwd", "flow:1:rev",
        "flow:2:fwd", "flow:2:rev",
        "flow:3:fwd", "flow:3:rev",
    ]


def test_matpower_subset_parser(tmp_path):
    text = """function mpc = tiny
mpc.baseMVA = 100;
mpc.bus = [
1 3 0 0 0 0 1 1.0 0 132 1 1.1 0.9;
2 1 40 10 0 0 1 1.0 0 132 1 1.1 0.9;
];
mpc.gen = [
1 50 0 99 -99 1.0 100 1 120 0;
];
mpc.branch = [
1 2 0.01 0.05 0 80 0 0 0 0 1 -360 360;
];
mpc.gencost = [
2 0 0 2 12.5 0;
];
"""
    case, meters = parse_case(text, "matpower", name="tiny")
    assert len(case.buses) == 2
    assert case.reference_bus == 1
    assert case.branches[0].x == 0.05
    assert case.branches[0].limit == 80.0
    assert case.market.generators[0].offer == 12.5
    assert case.market.generators[0].capacity == 120.0
    assert meters.m == 2 + 2


def test_matpower_sidecar_offers():
    text = """mpc.baseMVA = 100;
mpc.bus = [
1 3 0 0 0 0 1 1.0 0 132 1 1.1 0.9;
2 1 10 0 0 0 1 1.0 0 132 1 1.1 0.9;
];
mpc.gen = [
1 10 0 99 -99 1.0 100 1 50 0;
];
mpc.branch = [
1 2 0.02 0.08 0 0 0 0 0 0 1 -360 360;
];
"""
    sidecar = json.dumps({"offers": [22.0], "line_limits": {"1-2": 30.0}})
    case, _ = parse_case(text, "matpower", name="tiny", market_sidecar=sidecar)
    assert case.market.generators[0].offer == 22.0
    assert case.branches[0].limit == 30.0


def test_load_case_bundled_names():
    for name in ("t3", "ieee14", "case118"):
        case, meters = load_case(name)
        assert meters.m == len(case.buses) + 2 * len(case.branches)


def test_case118_scale(case118):
    case, _ = case118
    assert len(case.buses) == 118
    assert len(case.branches) == 186
    assert sum(1 for k in case.branches if k.limited) == 16
    assert len(case.market.generators) == 54


def test_price_cap_ordering_enforced():
    case, _ = t3_case()
    doc = json.loads(case_to_native_json(case))
    doc["price_caps"] = [500.0, -100.0]
    with pytest.raises(CaseError, match="floor < ceiling"):
        parse_case(json.dumps(doc), "native")
