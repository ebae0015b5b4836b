import numpy as np
import pytest

from lmpsim.cases import load_case, t3_case
from lmpsim.network import build_dc_model


@pytest.fixture(scope="session")
def t3():
    case, meters = t3_case()
    return case, meters


@pytest.fixture(scope="session")
def t3_model(t3):
    case, meters = t3
    return build_dc_model(case, meters)


@pytest.fixture(scope="session")
def ieee14():
    return load_case("ieee14")


@pytest.fixture(scope="session")
def ieee14_model(ieee14):
    case, meters = ieee14
    return build_dc_model(case, meters)


@pytest.fixture(scope="session")
def case118():
    return load_case("case118")


@pytest.fixture(scope="session")
def case118_model(case118):
    case, meters = case118
    return build_dc_model(case, meters)


def dense_ptdf_oracle(case):
    """Independent PTDF construction: assemble the reduced susceptance system
    from scratch and solve it densely for each unit injection."""
    bus_ids = [b.id for b in case.buses]
    nonref = [b for b in bus_ids if b != case.reference_bus]
    col = {b: i for i, b in enumerate(nonref)}
    n = len(nonref)
    B = np.zeros((n, n))
    for k in case.branches:
        if not k.closed:
            continue
        b = 1.0 / k.x
        if k.from_bus in col:
            B[col[k.from_bus], col[k.from_bus]] += b
        if k.to_bus in col:
            B[col[k.to_bus], col[k.to_bus]] += b
        if k.from_bus in col and k.to_bus in col:
            B[col[k.from_bus], col[k.to_bus]] -= b
            B[col[k.to_bus], col[k.from_bus]] -= b
    A = np.zeros((len(case.branches), len(bus_ids)))
    for j, bid in enumerate(bus_ids):
        if bid == case.reference_bus:
            continue
        rhs = np.zeros(n)
        rhs[col[bid]] = 1.0
        theta = np.linalg.solve(B, rhs)
        for r, k in enumerate(case.branches):
            if not k.closed:
                continue
            ti = theta[col[k.from_bus]] if k.from_bus in col else 0.0
            tj = theta[col[k.to_bus]] if k.to_bus in col else 0.0
            A[r, j] = (ti - tj) / k.x
    return A
