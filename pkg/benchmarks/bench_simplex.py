"""Benchmark: compiled vs pure-Python simplex kernel.

Workload mirrors the Monte Carlo hot path: ex-post pricing LPs over the
candidate congestion patterns of the bundled cases, plus a batch of random
box LPs. Run from the repo root:

    python benchmarks/bench_simplex.py [--repeat 5]
"""

import argparse
import itertools
import time

import numpy as np

from lmpsim.cases import load_case
from lmpsim.network import build_dc_model
from lmpsim.pricing import solve_expost_lmp
from lmpsim.solvers import _simplex_py
from lmpsim.solvers import simplex as wrapper

try:
    from lmpsim.solvers import _simplex_c
except ImportError:
    _simplex_c = None


def pricing_workload():
    jobs = []
    for name in ("ieee14", "case118"):
        case, meters = load_case(name)
        model = build_dc_model(case, meters)
        limited = sorted(model.limited_branch_ids)
        pats = []
        for k in range(0, min(len(limited), 4) + 1):
            pats.extend(map(frozenset, itertools.combinations(limited[:8], k)))
        jobs.append((name, case.market, model, pats))
    return jobs


def random_lp_workload(n_problems=300, seed=0):
    rng = np.random.default_rng(seed)
    problems = []
    for _ in range(n_problems):
        nv = int(rng.integers(4, 24))
        mu_ = int(rng.integers(2, 10))
        c = rng.normal(size=nv)
        Au = rng.normal(size=(mu_, nv))
        bu = rng.uniform(0.5, 2.0, mu_)
        lo = rng.uniform(-3, 0, nv)
        hi = lo + rng.uniform(0.5, 4, nv)
        problems.append((c, Au, bu, lo, hi))
    return problems


def run_with(kernel, jobs, rand_problems):
    wrapper.lp_core = kernel.lp_core
    t0 = time.perf_counter()
    n_lps = 0
    for _, market, model, pats in jobs:
        for pat in pats:
            solve_expost_lmp(market, model, pat)
            n_lps += 1
    t_pricing = time.perf_counter() - t0

    t0 = time.perf_counter()
    for c, Au, bu, lo, hi in rand_problems:
        wrapper.solve_lp(c, A_ub=Au, b_ub=bu, lb=lo, ub=hi)
    t_rand = time.perf_counter() - t0
    return t_pricing, n_lps, t_rand


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    jobs = pricing_workload()
    rand_problems = random_lp_workload()
    kernels = [("python", _simplex_py)]
    if _simplex_c is not None:
        kernels.append(("compiled", _simplex_c))
    else:
        print("compiled kernel not built; benchmarking the fallback only")

    original = wrapper.lp_core
    rows = []
    try:
        for name, kernel in kernels:
            best_pricing, best_rand = np.inf, np.inf
            for _ in range(args.repeat):
                t_pricing, n_lps, t_rand = run_with(kernel, jobs, rand_problems)
                best_pricing = min(best_pricing, t_pricing)
                best_rand = min(best_rand, t_rand)
            rows.append((name, best_pricing, n_lps, best_rand, len(rand_problems)))
    finally:
        wrapper.lp_core = original

    print(f"{'kernel':<10} {'pricing LPs':>12} {'total s':>9} {'ms/LP':>8} "
          f"{'random LPs':>11} {'total s':>9} {'ms/LP':>8}")
    for name, tp, n, tr, nr in rows:
        print(f"{name:<10} {n:>12} {tp:>9.3f} {tp / n * 1e3:>8.3f} "
              f"{nr:>11} {tr:>9.3f} {tr / nr * 1e3:>8.3f}")
    if len(rows) == 2:
        print(f"\nspeedup (pricing): {rows[0][1] / rows[1][1]:.2f}x, "
              f"(random): {rows[0][3] / rows[1][3]:.2f}x")


if __name__ == "__main__":
    main()
