"""Case ingestion and the canonical data model.

A case bundles the network (buses, directed branches with breaker states),
market data (offers/bids and incremental dispatch bounds), and the metering
layout. Two input formats are accepted: the native structured JSON document
(schema documented in the README) and a subset of the MATPOWER text format
(bus/branch/gen matrices; market data then comes from a JSON sidecar).

Conventions: powers and limits are MW at the interface, angles rad, prices
$/MWh; internally flows are per-unit on `base_mva`.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .errors import CaseError

DEFAULT_NOISE_STD_PU = 0.01       # per-meter measurement noise, p.u.
DEFAULT_PRIOR_STD_RAD = 0.01      # state prior std, rad
DEFAULT_DP_MIN = -2.0             # incremental dispatch bounds, MW
DEFAULT_DP_MAX = 0.1
DEFAULT_PRICE_CAPS = (-100.0, 500.0)


@dataclass(frozen=True)
class Bus:
    id: int
    load: float = 0.0  # MW


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    x: float                      # reactance, p.u.
    limit: float | None = None    # flow limit, MW; None = unlimited
    closed: bool = True           # breaker state

    @property
    def limited(self) -> bool:
        return self.limit is not None


@dataclass(frozen=True)
class Generator:
    bus: int
    offer: float                  # $/MWh
    capacity: float               # MW
    dp_min: float = DEFAULT_DP_MIN
    dp_max: float = DEFAULT_DP_MAX


@dataclass(frozen=True)
class DispatchableLoad:
    bus: int
    bid: float                    # $/MWh
    dd_min: float = 0.0
    dd_max: float = 0.0


@dataclass(frozen=True)
class MarketConfig:
    generators: tuple[Generator, ...]
    dispatchable_loads: tuple[DispatchableLoad, ...] = ()
    price_caps: tuple[float, float] = DEFAULT_PRICE_CAPS

    def __post_init__(self):
        floor, ceiling = self.price_caps
        if not floor < ceiling:
            raise CaseError(f"price caps must satisfy floor < ceiling, got {self.price_caps}")
        for g in self.generators:
            if g.dp_min > g.dp_max:
                raise CaseError(f"generator at bus {g.bus}: dp_min {g.dp_min} > dp_max {g.dp_max}")
        for dl in self.dispatchable_loads:
            if dl.dd_min > dl.dd_max:
                raise CaseError(f"dispatchable load at bus {dl.bus}: dd_min > dd_max")


@dataclass(frozen=True)
class PowerCase:
    name: str
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    market: MarketConfig
    reference_bus: int
    base_mva: float = 100.0

    def __post_init__(self):
        bus_ids = [b.id for b in self.buses]
        if len(set(bus_ids)) != len(bus_ids):
            raise CaseError("duplicate bus ids")
        bus_set = set(bus_ids)
        if self.reference_bus not in bus_set:
            raise CaseError(f"reference bus {self.reference_bus} is not a bus")
        br_ids = [k.id for k in self.branches]
        if len(set(br_ids)) != len(br_ids):
            raise CaseError("duplicate branch ids")
        for k in self.branches:
            if k.from_bus not in bus_set or k.to_bus not in bus_set:
                raise CaseError(f"branch {k.id} endpoint {k.from_bus}-{k.to_bus} references a nonexistent bus")
            if k.x <= 0:
                raise CaseError(f"branch {k.id}: reactance must be > 0, got {k.x}")
        for g in self.market.generators:
            if g.bus not in bus_set:
                raise CaseError(f"generator bus {g.bus} does not exist")
        for dl in self.market.dispatchable_loads:
            if dl.bus not in bus_set:
                raise CaseError(f"dispatchable load bus {dl.bus} does not exist")
        if not _connected(bus_ids, [(k.from_bus, k.to_bus) for k in self.branches if k.closed]):
            raise CaseError("closed-breaker subgraph is not connected")

    # -- index helpers -------------------------------------------------
    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    @property
    def n_state(self) -> int:
        """State dimension: bus count minus the reference."""
        return len(self.buses) - 1

    def bus_index(self, bus_id: int) -> int:
        return self.bus_ids.index(bus_id)

    def branch_by_id(self, branch_id: int) -> Branch:
        for k in self.branches:
            if k.id == branch_id:
                return k
        raise CaseError(f"no branch with id {branch_id}")

    @property
    def closed_branches(self) -> tuple[Branch, ...]:
        return tuple(k for k in self.branches if k.closed)

    @property
    def loads_mw(self) -> np.ndarray:
        return np.array([b.load for b in self.buses], dtype=float)

    def scale_loads(self, factor: float) -> "PowerCase":
        buses = tuple(replace(b, load=b.load * factor) for b in self.buses)
        return replace(self, buses=buses)

    def with_open_branches(self, removed_ids: set[int]) -> "PowerCase":
        branches = tuple(
            replace(k, closed=False) if k.id in removed_ids else k for k in self.branches
        )
        return replace(self, branches=branches)


def _connected(bus_ids, edges) -> bool:
    if not bus_ids:
        return False
    adj: dict[int, list[int]] = {b: [] for b in bus_ids}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {bus_ids[0]}
    stack = [bus_ids[0]]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(bus_ids)


# ---------------------------------------------------------------------------
# Metering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Meter:
    """One measurement channel: a bus injection or a directed branch flow."""
    kind: str          # "injection" | "flow"
    bus: int | None = None
    branch_id: int | None = None
    reverse: bool = False  # flow meter at the to-bus end (measures to->from)

    def label(self) -> str:
        if self.kind == "injection":
            return f"inj:{self.bus}"
        d = "rev" if self.reverse else "fwd"
        return f"flow:{self.branch_id}:{d}"


@dataclass(frozen=True, eq=False)
class MeterConfig:
    meters: tuple[Meter, ...]
    noise_std: np.ndarray          # per-meter std, p.u.
    suspects: frozenset[int] = frozenset()

    def __post_init__(self):
        if len(self.meters) == 0:
            raise CaseError("empty meter set")
        std = np.asarray(self.noise_std, dtype=float)
        if std.shape != (len(self.meters),):
            raise CaseError("noise std vector length does not match meter count")
        if np.any(std <= 0):
            raise CaseError("meter noise std must be > 0")
        if any(not 0 <= i < len(self.meters) for i in self.suspects):
            raise CaseError("suspect set contains an invalid meter index")
        object.__setattr__(self, "noise_std", std)

    @property
    def m(self) -> int:
        return len(self.meters)

    @property
    def covariance(self) -> np.ndarray:
        """Diagonal noise covariance R (p.u.^2)."""
        return np.diag(self.noise_std**2)

    def index_of(self, label: str) -> int:
        for i, mt in enumerate(self.meters):
            if mt.label() == label:
                return i
        raise CaseError(f"no meter labelled {label}")

    def with_suspects(self, suspects) -> "MeterConfig":
        return replace(self, suspects=frozenset(int(i) for i in suspects))


def canonical_meters(case: PowerCase) -> tuple[Meter, ...]:
    """Canonical meter ordering: injections by bus id, then per-branch flow
    pairs (forward before reverse) by branch id. Open branches keep their
    meters so the measurement dimension never changes with topology."""
    meters = [Meter("injection", bus=b) for b in sorted(case.bus_ids)]
    for k in sorted(case.branches, key=lambda k: k.id):
        meters.append(Meter("flow", branch_id=k.id, reverse=False))
        meters.append(Meter("flow", branch_id=k.id, reverse=True))
    return tuple(meters)


def build_measurement_model(case: PowerCase, noise=None, suspects=()) -> MeterConfig:
    """Meter set = all bus injections plus both-direction flows on every branch.

    `noise` is a scalar std or a per-meter vector (p.u.); default 0.01 p.u.
    """
    meters = canonical_meters(case)
    if noise is None:
        noise = DEFAULT_NOISE_STD_PU
    std = np.asarray(noise, dtype=float)
    if std.ndim == 0:
        std = np.full(len(meters), float(std))
    return MeterConfig(meters=meters, noise_std=std, suspects=frozenset(int(i) for i in suspects))


def suspects_for_lines(case: PowerCase, meters: MeterConfig, line_ids) -> frozenset[int]:
    """Meters an adversary controls when it owns a set of lines: both flow
    meters of each line plus the injection meters at its endpoints."""
    wanted: set[str] = set()
    for lid in line_ids:
        k = case.branch_by_id(lid)
        wanted.add(f"flow:{k.id}:fwd")
        wanted.add(f"flow:{k.id}:rev")
        wanted.add(f"inj:{k.from_bus}")
        wanted.add(f"inj:{k.to_bus}")
    return frozenset(i for i, mt in enumerate(meters.meters) if mt.label() in wanted)


# ---------------------------------------------------------------------------
# State prior
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StatePrior:
    mean: np.ndarray          # rad, reference excluded
    covariance: np.ndarray    # rad^2

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise CaseError("prior covariance shape does not match mean")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise CaseError("prior covariance must be symmetric")
        w = np.linalg.eigvalsh(cov)
        if w.min() < -1e-12 * max(1.0, w.max()):
            raise CaseError("prior covariance must be positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


def merit_order_dispatch(case: PowerCase) -> np.ndarray:
    """Day-ahead style dispatch: fill cheapest offers first up to capacity
    until total (fixed) load is met. Returns per-bus generation in MW."""
    total = float(np.sum(case.loads_mw))
    gen = np.zeros(len(case.buses))
    remaining = total
    for g in sorted(case.market.generators, key=lambda g: (g.offer, g.bus)):
        take = min(g.capacity, remaining)
        gen[case.bus_index(g.bus)] += take
        remaining -= take
        if remaining <= 1e-12:
            break
    if remaining > 1e-9:
        raise CaseError(f"total generation capacity short of load by {remaining:.3f} MW")
    return gen


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def parse_case(text: str, fmt: str = "native", name: str = "case", market_sidecar: str | None = None):
    """Parse a case document.

    Returns (PowerCase, MeterConfig). `fmt` is "native" (structured JSON) or
    "matpower" (text subset; market data from `market_sidecar` JSON when the
    gen matrix carries no cost data).
    """
    if fmt == "native":
        return _parse_native(text)
    if fmt == "matpower":
        return _parse_matpower(text, name=name, market_sidecar=market_sidecar)
    raise CaseError(f"unsupported case format: {fmt}")


def _parse_native(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CaseError(f"native case JSON parse error at line {e.lineno}: {e.msg}") from e
    for section in ("buses", "branches", "generators", "reference_bus"):
        if section not in doc:
            raise CaseError(f"native case missing required section '{section}'")

    def fail(where, msg):
        raise CaseError(f"{where}: {msg}")

    buses = []
    for i, b in enumerate(doc["buses"]):
        if "id" not in b:
            fail(f"buses[{i}]", "missing id")
        buses.append(Bus(id=int(b["id"]), load=float(b.get("load", 0.0))))

    branches = []
    for i, k in enumerate(doc["branches"]):
        for f in ("from", "to", "x"):
            if f not in k:
                fail(f"branches[{i}]", f"missing field '{f}'")
        limit = k.get("limit")
        branches.append(
            Branch(
                id=int(k.get("id", i + 1)),
                from_bus=int(k["from"]),
                to_bus=int(k["to"]),
                x=float(k["x"]),
                limit=None if limit is None else float(limit),
                closed=bool(k.get("closed", True)),
            )
        )

    gens = []
    for i, g in enumerate(doc["generators"]):
        for f in ("bus", "offer", "capacity"):
            if f not in g:
                fail(f"generators[{i}]", f"missing field '{f}'")
        gens.append(
            Generator(
                bus=int(g["bus"]),
                offer=float(g["offer"]),
                capacity=float(g["capacity"]),
                dp_min=float(g.get("dp_min", DEFAULT_DP_MIN)),
                dp_max=float(g.get("dp_max", DEFAULT_DP_MAX)),
            )
        )
    dloads = tuple(
        DispatchableLoad(
            bus=int(d["bus"]),
            bid=float(d["bid"]),
            dd_min=float(d.get("dd_min", 0.0)),
            dd_max=float(d.get("dd_max", 0.0)),
        )
        for d in doc.get("dispatchable_loads", [])
    )
    caps = tuple(doc.get("price_caps", DEFAULT_PRICE_CAPS))
    market = MarketConfig(generators=tuple(gens), dispatchable_loads=dloads, price_caps=caps)
    case = PowerCase(
        name=str(doc.get("name", "case")),
        buses=tuple(buses),
        branches=tuple(branches),
        market=market,
        reference_bus=int(doc["reference_bus"]),
        base_mva=float(doc.get("base_mva", 100.0)),
    )

    meas = doc.get("measurement", {})
    noise = meas.get("noise_std", DEFAULT_NOISE_STD_PU)
    if isinstance(noise, list):
        noise = np.asarray(noise, dtype=float)
    meters = build_measurement_model(case, noise=noise, suspects=meas.get("suspect_meters", ()))
    return case, meters


def case_to_native_json(case: PowerCase, meters: MeterConfig | None = None) -> str:
    """Serialize to the native format; parsing the result round-trips."""
    doc = {
        "name": case.name,
        "base_mva": case.base_mva,
        "reference_bus": case.reference_bus,
        "buses": [{"id": b.id, "load": b.load} for b in case.buses],
        "branches": [
            {"id": k.id, "from": k.from_bus, "to": k.to_bus, "x": k.x,
             "limit": k.limit, "closed": k.closed}
            for k in case.branches
        ],
        "generators": [
            {"bus": g.bus, "offer": g.offer, "capacity": g.capacity,
             "dp_min": g.dp_min, "dp_max": g.dp_max}
            for g in case.market.generators
        ],
        "dispatchable_loads": [
            {"bus": d.bus, "bid": d.bid, "dd_min": d.dd_min, "dd_max": d.dd_max}
            for d in case.market.dispatchable_loads
        ],
        "price_caps": list(case.market.price_caps),
    }
    if meters is not None:
        doc["measurement"] = {
            "noise_std": meters.noise_std.tolist(),
            "suspect_meters": sorted(meters.suspects),
        }
    return json.dumps(doc, indent=1, sort_keys=True)


_MP_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\];", re.S)


def _parse_matpower(text: str, name: str, market_sidecar: str | None):
    """MATPOWER text subset: mpc.baseMVA plus bus/branch/gen matrices.

    Only the columns this model needs are read (bus: id, type, Pd; branch:
    fbus, tbus, x, rateA, status; gen: bus, Pmax, status). Offers come from a
    gencost matrix if present, else from the JSON sidecar."""
    matrices: dict[str, list[list[float]]] = {}
    for mname, body in _MP_MATRIX_RE.findall(text):
        rows = []
        for line in body.splitlines():
            line = line.split("%")[0].strip().rstrip(";")
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.replace(",", " ").split()])
            except ValueError as e:
                raise CaseError(f"matpower matrix {mname}: bad row '{line}'") from e
        matrices[mname] = rows
    for need in ("bus", "branch", "gen"):
        if need not in matrices:
            raise CaseError(f"matpower case missing mpc.{need}")

    base = 100.0
    mbase = re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)\s*;", text)
    if mbase:
        base = float(mbase.group(1))

    buses, ref = [], None
    for row in matrices["bus"]:
        if len(row) < 3:
            raise CaseError("matpower bus row too short")
        bid, btype, pd = int(row[0]), int(row[1]), float(row[2])
        buses.append(Bus(id=bid, load=pd))
        if btype == 3:
            if ref is not None:
                raise CaseError("matpower case has more than one reference bus")
            ref = bid
    if ref is None:
        raise CaseError("matpower case has no reference (type 3) bus")

    branches = []
    for i, row in enumerate(matrices["branch"]):
        if len(row) < 4:
            raise CaseError(f"matpower branch row {i} too short")
        rate = float(row[5]) if len(row) > 5 else 0.0
        status = int(row[10]) if len(row) > 10 else 1
        branches.append(
            Branch(id=i + 1, from_bus=int(row[0]), to_bus=int(row[1]), x=float(row[3]),
                   limit=None if rate <= 0 else rate, closed=status != 0)
        )

    sidecar = json.loads(market_sidecar) if market_sidecar else {}
    gencost = matrices.get("gencost")
    gens = []
    for i, row in enumerate(matrices["gen"]):
        if len(row) < 2:
            raise CaseError(f"matpower gen row {i} too short")
        bus = int(row[0])
        cap = float(row[8]) if len(row) > 8 else float(row[1])
        if gencost and len(gencost) > i:
            # linear-cost row: MODEL=2, startup, shutdown, n, c1, c0
            offer = float(gencost[i][4])
        elif "offers" in sidecar:
            offer = float(sidecar["offers"][i])
        else:
            raise CaseError("matpower case has no gencost and no market sidecar with offers")
        gens.append(Generator(bus=bus, offer=offer, capacity=cap,
                              dp_min=float(sidecar.get("dp_min", DEFAULT_DP_MIN)),
                              dp_max=float(sidecar.get("dp_max", DEFAULT_DP_MAX))))

    limits = sidecar.get("line_limits", {})
    if limits:
        by_pair = {}
        for k in branches:
            by_pair[(k.from_bus, k.to_bus)] = k.id
        patched = {}
        for key, mw in limits.items():
            i, j = (int(t) for t in key.split("-"))
            if (i, j) in by_pair:
                patched[by_pair[(i, j)]] = float(mw)
            elif (j, i) in by_pair:
                patched[by_pair[(j, i)]] = float(mw)
            else:
                raise CaseError(f"market sidecar limits a nonexistent line {key}")
        branches = [
            replace(k, limit=patched.get(k.id, k.limit)) for k in branches
        ]

    caps = tuple(sidecar.get("price_caps", DEFAULT_PRICE_CAPS))
    market = MarketConfig(generators=tuple(gens), price_caps=caps)
    case = PowerCase(name=name, buses=tuple(buses), branches=tuple(branches),
                     market=market, reference_bus=ref, base_mva=base)
    meters = build_measurement_model(case, noise=sidecar.get("noise_std", DEFAULT_NOISE_STD_PU))
    return case, meters


# ---------------------------------------------------------------------------
# Bundled cases
# ---------------------------------------------------------------------------

def t3_case():
    """Desk-scale fixture: 3-bus equal-reactance triangle. Gens at bus 1
    (10 $/MWh, 100 MW) and bus 2 (20 $/MWh, 100 MW), 50 MW load at bus 3,
    20 MW limit on branch (1,3)."""
    market = MarketConfig(
        generators=(
            Generator(bus=1, offer=10.0, capacity=100.0),
            Generator(bus=2, offer=20.0, capacity=100.0),
        )
    )
    case = PowerCase(
        name="t3",
        buses=(Bus(1), Bus(2), Bus(3, load=50.0)),
        branches=(
            Branch(1, 1, 2, 0.1),
            Branch(2, 1, 3, 0.1, limit=20.0),
            Branch(3, 2, 3, 0.1),
        ),
        market=market,
        reference_bus=1,
    )
    return case, build_measurement_model(case)


def load_case(name_or_path: str):
    """Load a bundled case by name ("t3", "ieee14", "case118") or a case file
    by path (native .json or matpower .m)."""
    if name_or_path == "t3":
        return t3_case()
    bundled = {"ieee14": "ieee14.json", "case118": "case118.json", "ieee118": "case118.json"}
    if name_or_path in bundled:
        text = resources.files("lmpsim.data").joinpath(bundled[name_or_path]).read_text()
        return parse_case(text, "native")
    from pathlib import Path

    p = Path(name_or_path)
    if not p.exists():
        raise CaseError(f"case '{name_or_path}' is neither bundled nor an existing file")
    fmt = "matpower" if p.suffix.lower() == ".m" else "native"
    sidecar = None
    if fmt == "matpower":
        side = p.with_suffix(".market.json")
        if side.exists():
            sidecar = side.read_text()
    return parse_case(p.read_text(), fmt, name=p.stem, market_sidecar=sidecar)
