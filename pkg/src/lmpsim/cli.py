"""Command-line entry point.

Subcommands: case, estimate, lmp, partition, attack, montecarlo,
compare-search. JSON is the canonical machine format (CSV for curves and
per-trial logs); exit status 0 on success, 1 on data errors, 2 on usage
errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .attacks.meter import SuspectSpace, worst_meter_attack
from .attacks.topology import Capabilities, TopologyEvaluator, worst_topology_attack
from .cases import case_to_native_json, load_case, suspects_for_lines
from .errors import LmpsimError
from .estimation import DetectorConfig, detector_threshold, estimate, operators
from .harness import ScenarioConfig, compare_search_methods, run_scenario
from .network import build_dc_model, day_ahead_state
from .pricing import PriceTable, solve_expost_lmp
from .regions import boundary_margin, candidate_patterns, region_of_state, region_witness


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lmpsim",
                                 description="real-time LMP sensitivity to bad meter/breaker data")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--case", required=True, help="bundled case name (t3, ieee14, case118) or a file path")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p_case = sub.add_parser("case", help="parse, validate, and summarize a case")
    add_common(p_case)
    p_case.add_argument("--emit-json", action="store_true", help="print the native-format document")

    p_est = sub.add_parser("estimate", help="WLS estimate + detector verdict for a snapshot")
    add_common(p_est)
    p_est.add_argument("--z", required=True, help="measurement CSV (one MW value per line, canonical meter order)")
    p_est.add_argument("--alpha", type=float, default=0.1)
    p_est.add_argument("--claimed-removed", default="", help="comma-separated branch ids the operator believes open")

    p_lmp = sub.add_parser("lmp", help="ex-post prices for a congestion pattern")
    add_common(p_lmp)
    p_lmp.add_argument("--pattern", default="", help='congested branch ids, e.g. "3,11" (empty = none)')

    p_part = sub.add_parser("partition", help="price-region view around a state")
    add_common(p_part)
    p_part.add_argument("--state", help="state CSV (rad, reference excluded); default: day-ahead state")
    p_part.add_argument("--threshold", type=float, default=10.0, help="candidate line threshold, MW")
    p_part.add_argument("--cap", type=int, default=12)

    p_att = sub.add_parser("attack", help="construct a worst-case attack plan")
    add_common(p_att)
    p_att.add_argument("mode", choices=("meter", "topology"))
    p_att.add_argument("--model", choices=("m1", "m2", "m3"), default="m3", help="meter attack model")
    p_att.add_argument("--epsilon", default="10.0",
                       help="m1/m2 residual-energy budget, a value or comma grid")
    p_att.add_argument("--suspects", default="all", help='"all", "lines:3,11", or "meters:0,5,9"')
    p_att.add_argument("--search", choices=("exhaustive", "greedy"), default="exhaustive")
    p_att.add_argument("--remove", default="auto",
                       help='topology: "auto" searches targets, or comma branch ids')
    p_att.add_argument("--max-removals", type=int, default=2)
    p_att.add_argument("--seed", type=int, default=0, help="seed for the synthesized snapshot")
    p_att.add_argument("--alpha", type=float, default=0.1)
    p_att.add_argument("--threshold", type=float, default=10.0)

    p_mc = sub.add_parser("montecarlo", help="run a scenario file")
    p_mc.add_argument("--scenario", required=True, help="scenario JSON file")
    p_mc.add_argument("--out", required=True, help="output directory")

    p_cmp = sub.add_parser("compare-search", help="greedy vs exhaustive pattern search")
    p_cmp.add_argument("--scenario", required=True)
    p_cmp.add_argument("--out", help="output JSON file (default: stdout)")

    return ap


def _write(args, text: str):
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _load(args):
    case, meters = load_case(args.case)
    return case, meters


def _read_vector(path: str) -> np.ndarray:
    rows = [line.strip() for line in Path(path).read_text().splitlines()]
    return np.array([float(r) for r in rows if r and not r.startswith("#")])


def _suspect_set(case, meters, spec: str) -> frozenset[int]:
    if spec == "all":
        return frozenset(range(meters.m))
    if spec.startswith("lines:"):
        ids = [int(t) for t in spec.split(":", 1)[1].split(",") if t]
        return suspects_for_lines(case, meters, ids)
    if spec.startswith("meters:"):
        return frozenset(int(t) for t in spec.split(":", 1)[1].split(",") if t)
    raise LmpsimError(f"unknown suspects selector {spec!r}")


def cmd_case(args) -> int:
    case, meters = _load(args)
    if args.emit_json:
        _write(args, case_to_native_json(case, meters))
        return 0
    model = build_dc_model(case, meters)
    doc = {
        "name": case.name,
        "buses": len(case.buses),
        "branches": len(case.branches),
        "closed_branches": len(case.closed_branches),
        "limited_branches": sorted(model.limited_branch_ids),
        "generators": len(case.market.generators),
        "meters": meters.m,
        "state_dimension": model.n,
        "detector_dof": model.dof,
        "observable": model.rank == model.n,
        "total_load_mw": float(np.sum(case.loads_mw)),
    }
    _write(args, json.dumps(doc, indent=1, sort_keys=True))
    return 0


def cmd_estimate(args) -> int:
    case, meters = _load(args)
    z = _read_vector(args.z) / case.base_mva
    claimed = {int(t) for t in args.claimed_removed.split(",") if t}
    if claimed:
        from .estimation import topo_estimate

        rep = topo_estimate(case, claimed, z, DetectorConfig(args.alpha), meters)
    else:
        rep = estimate(build_dc_model(case, meters), z, DetectorConfig(args.alpha))
    _write(args, json.dumps(rep.to_dict(), indent=1, sort_keys=True))
    return 0


def cmd_lmp(args) -> int:
    case, meters = _load(args)
    model = build_dc_model(case, meters)
    pattern = _parse_pattern(args.pattern)
    sol = solve_expost_lmp(case.market, model, pattern)
    _write(args, json.dumps(sol.to_dict([b.id for b in case.buses]), indent=1, sort_keys=True))
    return 0


def _parse_pattern(spec: str):
    spec = spec.strip()
    if not spec:
        return frozenset()
    parts = spec.replace("-", ",").split(",")
    return frozenset(int(t) for t in parts if t)


def cmd_partition(args) -> int:
    case, meters = _load(args)
    model = build_dc_model(case, meters)
    x = _read_vector(args.state) if args.state else day_ahead_state(case)
    table = PriceTable(case.market, model)
    pattern = region_of_state(model, x)
    flows = model.F @ x * case.base_mva
    doc = {
        "pattern": sorted(pattern),
        "boundary_margin_mw": boundary_margin(model, x),
        "regions": [],
    }
    for pat in candidate_patterns(model, flows, args.threshold, args.cap):
        region = region_witness(model, pat)
        sol = table.price(pat)
        doc["regions"].append({
            "pattern": sorted(pat),
            "nonempty": region.nonempty,
            "margin_mw": region.margin_mw,
            "lmp": None if sol is None else {str(b.id): float(v) for b, v in zip(case.buses, sol.lmp)},
            "priced": sol is not None,
        })
    _write(args, json.dumps(doc, indent=1, sort_keys=True))
    return 0


def cmd_attack(args) -> int:
    case, meters = _load(args)
    model = build_dc_model(case, meters)
    rng = np.random.default_rng(args.seed)
    x0 = day_ahead_state(case)
    x = x0 + rng.normal(0.0, 0.01, size=model.n)
    z = model.H @ x
    z[model.active_meters] += rng.normal(0.0, meters.noise_std[model.active_meters])
    z[~model.active_meters] = 0.0
    detector = DetectorConfig(args.alpha)

    if args.mode == "topology":
        if args.suspects == "all":
            line_ids = [k.id for k in case.closed_branches]
        elif args.suspects.startswith("lines:"):
            line_ids = [int(t) for t in args.suspects.split(":", 1)[1].split(",") if t]
        else:
            raise LmpsimError("topology attacks take --suspects all or lines:<ids>")
        caps = Capabilities.for_lines(case, meters, line_ids)
        if args.remove != "auto":
            removed = {int(t) for t in args.remove.split(",") if t}
            from .attacks.topology import line_removal_attack

            plan = line_removal_attack(case, meters, z, removed, caps)
            table = []
        else:
            ev = TopologyEvaluator(case, meters, model, detector)
            plan, table = worst_topology_attack(ev, z, caps, args.max_removals)
        doc = plan.to_dict()
        doc["targets_evaluated"] = [
            {"removed": sorted(t.removed), "perturbation": t.perturbation, "detected": t.detected}
            for t in table
        ]
        _write(args, json.dumps(doc, indent=1, sort_keys=True))
        return 0

    suspects = SuspectSpace.from_meters(_suspect_set(case, meters, args.suspects))
    table = PriceTable(case.market, model)
    ops = operators(model)
    tau = detector_threshold(model.dof, args.alpha)
    if args.model == "m3":
        anchor_flows = model.F @ (ops.K @ z) * case.base_mva
    else:
        anchor_flows = model.F @ x0 * case.base_mva
    cands = candidate_patterns(model, anchor_flows, args.threshold)
    try:
        eps_grid = [float(t) for t in str(args.epsilon).split(",") if t]
    except ValueError as e:
        raise LmpsimError(f"bad epsilon grid {args.epsilon!r}") from e
    plans = [
        worst_meter_attack(model, table, args.model, suspects, cands,
                           anchor_x=x0, z=z, epsilon=eps, tau=tau, search=args.search)
        for eps in (eps_grid or [10.0])
    ]
    if len(plans) == 1:
        _write(args, json.dumps(plans[0].to_dict(), indent=1, sort_keys=True))
    else:
        _write(args, json.dumps({"plans": [p.to_dict() for p in plans]}, indent=1, sort_keys=True))
    return 0


def cmd_montecarlo(args) -> int:
    cfg = ScenarioConfig.from_json(Path(args.scenario).read_text())
    result = run_scenario(cfg)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "results.json").write_text(result.to_json() + "\n")
    (outdir / "trials.csv").write_text(result.trials_csv())
    (outdir / "curve.csv").write_text(result.curve_csv())
    for p in result.points:
        eps = "-" if p.epsilon is None else f"{p.epsilon:g}"
        sys.stdout.write(
            f"eps={eps} detection={p.detection_probability:.4f} arpp={p.arpp:.4f} "
            f"undetected={p.undetected_trials}/{p.trials}\n"
        )
    sys.stdout.write(f"wrote {outdir}/results.json, trials.csv, curve.csv\n")
    return 0


def cmd_compare_search(args) -> int:
    cfg = ScenarioConfig.from_json(Path(args.scenario).read_text())
    report, timing = compare_search_methods(cfg)
    doc = {"report": report, "timing": timing}
    _write(args, json.dumps(doc, indent=1, sort_keys=True))
    sys.stdout.write(
        f"agreement={report['agreement_rate']:.3f} "
        f"greedy={timing['greedy_mean_s']*1e3:.2f}ms "
        f"exhaustive={timing['exhaustive_mean_s']*1e3:.2f}ms\n"
    )
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    handlers = {
        "case": cmd_case,
        "estimate": cmd_estimate,
        "lmp": cmd_lmp,
        "partition": cmd_partition,
        "attack": cmd_attack,
        "montecarlo": cmd_montecarlo,
        "compare-search": cmd_compare_search,
    }
    try:
        return handlers[args.command](args)
    except LmpsimError as e:
        sys.stderr.write(f"error: {e}\n")
        return 1
    except FileNotFoundError as e:
        sys.stderr.write(f"error: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
