"""Generate the bundled 118-bus benchmark network (synthetic, deterministic).

A ring backbone plus seeded random chords gives 118 buses / 186 branches.
Market data follows the benchmark convention used elsewhere in this repo:
generator costs drawn from {20,25,30,35,40} $/MWh, capacities from
{200,250,300,350,400} MW, 16 limited lines with limits from {70,90,110} MW
assigned to lines whose day-ahead flow sits below the limit, several of them
within the 10 MW candidate band.

Run from the repo root:  python tools/make_case118.py
"""

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from lmpsim.cases import merit_order_dispatch, parse_case  # noqa: E402
from lmpsim.network import build_dc_model, injections_to_state  # noqa: E402

N_BUS = 118
N_BRANCH = 186
N_GEN = 54
SEED = 118


def main() -> None:
    rng = np.random.default_rng(SEED)

    edges = [(i, i + 1) for i in range(1, N_BUS)]          # ring backbone (open)
    edges.append((1, N_BUS))                               # close the ring
    have = set(edges)
    while len(edges) < N_BRANCH:
        i = int(rng.integers(1, N_BUS + 1))
        span = int(rng.integers(2, 12))
        j = i + span
        if j > N_BUS:
            continue
        if (i, j) in have or (j, i) in have:
            continue
        edges.append((i, j))
        have.add((i, j))

    branches = [
        {"id": n + 1, "from": i, "to": j, "x": round(float(rng.uniform(0.03, 0.25)), 5),
         "limit": None, "closed": True}
        for n, (i, j) in enumerate(edges)
    ]

    gen_buses = sorted(rng.choice(np.arange(1, N_BUS + 1), size=N_GEN, replace=False).tolist())
    costs = rng.choice([20, 25, 30, 35, 40], size=N_GEN)
    caps = rng.choice([200, 250, 300, 350, 400], size=N_GEN)
    generators = [
        {"bus": int(b), "offer": float(c), "capacity": float(p), "dp_min": -2.0, "dp_max": 0.1}
        for b, c, p in zip(gen_buses, costs, caps)
    ]

    load_buses = [b for b in range(1, N_BUS + 1) if b not in set(gen_buses)]
    loads = {b: round(float(rng.uniform(25.0, 95.0)), 1) for b in load_buses}
    buses = [{"id": b, "load": loads.get(b, 0.0)} for b in range(1, N_BUS + 1)]

    doc = {
        "name": "case118",
        "base_mva": 100.0,
        "reference_bus": 1,
        "buses": buses,
        "branches": branches,
        "generators": generators,
        "dispatchable_loads": [],
        "price_caps": [-100.0, 500.0],
    }

    # Day-ahead flows decide which lines carry limits: each limited line gets
    # the smallest class limit above its flow, preferring near-limit lines so
    # the candidate-congestion band is populated.
    case, _ = parse_case(json.dumps(doc), "native")
    model = build_dc_model(case)
    x0 = injections_to_state(case, merit_order_dispatch(case) - case.loads_mw)
    flows = np.abs(model.F @ x0) * case.base_mva

    classes = np.array([70.0, 90.0, 110.0])
    scored = []
    for r, k in enumerate(case.branches):
        fits = classes[classes > flows[r] + 1.0]
        if fits.size == 0:
            continue
        limit = float(fits[0])
        scored.append((limit - flows[r], r, limit))
    scored.sort()
    chosen = []
    for gap, r, limit in scored:
        if len(chosen) >= 16:
            break
        chosen.append((r, limit))
    for r, limit in chosen:
        branches[r]["limit"] = limit

    out = Path(__file__).resolve().parents[1] / "src" / "lmpsim" / "data" / "case118.json"
    out.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    gaps = sorted(round(float(branches[r]["limit"] - flows[r]), 2) for r, _ in chosen)
    print(f"wrote {out}")
    print(f"total load {sum(loads.values()):.1f} MW, limited-line gaps (MW): {gaps}")


if __name__ == "__main__":
    main()
