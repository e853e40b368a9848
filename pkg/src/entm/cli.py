"""
Command-line front end.

Exit codes: 0 success, 1 comparison or fixture failure, 2 invalid input,
3 infeasible physics (fidelity below threshold, no d_max).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import fixtures as fx
from .errors import InfeasibleLinkError, MissingFixtureError, ScenarioError
from .feasibility import dmax_closed_form, dmax_link_model, dmax_with_rotation
from .fidelity import link_budget
from .markov import build_state_space, steady_state, transition_matrix
from .mcsim import SimConfig, compare, run_simulation, total_variation
from .metrics import analyze
from .params import default_scenario, load_scenario, scenario_to_document
from .reproduce import TARGETS, Table, reproduce, to_csv

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2, 3
TV_LIMIT = 0.005


class UsageError(Exception):
    """Bad command-line values that argparse itself cannot catch."""


def _scenario(args):
    return load_scenario(args.config) if args.config else default_scenario()


def _emit(text: str, out: str | None):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_link_budget(args) -> int:
    params = _scenario(args)
    d = (args.distance_km if args.distance_km is not None else params.request_distance / 1e3) * 1e3
    if d <= 0:
        raise UsageError("--distance-km must be > 0")
    budget = link_budget(d, params, convention=args.convention)
    values = budget.as_dict()
    if args.json:
        sys.stdout.write(json.dumps({"scenario": scenario_to_document(params), "link_budget": values},
                                    indent=2) + "\n")
    else:
        cols = list(values)
        sys.stdout.write(to_csv(Table("link_budget", cols, [[values[c] for c in cols]],
                                      {"scenario": scenario_to_document(params)})))
    if not budget.feasible:
        print(f"infeasible: F0' = {budget.f0_prime:.6g} < F_th = {params.noise.fidelity_threshold:.6g} "
              f"at {d / 1e3:.6g} km", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_reproduce(args) -> int:
    params = load_scenario(args.config) if args.config else None
    for path in reproduce(args.target, args.out, params):
        print(path)
    return EXIT_OK


def _lambda_grid(text: str) -> np.ndarray:
    try:
        start, stop, steps = text.split(",")
        start, stop, steps = float(start), float(stop), int(steps)
    except ValueError:
        raise UsageError("--lambda-grid expects start,stop,steps") from None
    if not (0 <= start < stop <= 1) or steps < 2:
        raise UsageError("--lambda-grid needs 0 <= start < stop <= 1 and steps >= 2")
    return np.linspace(start, stop, steps)


def cmd_metrics(args) -> int:
    params = _scenario(args)
    if args.window_slots < 1:
        raise UsageError("--window-slots must be >= 1")
    grid = _lambda_grid(args.lambda_grid) if args.lambda_grid else np.array([params.request_rate])
    cols = ["lambda", "p_prime", "K", "avg_satisfaction", "steady_satisfaction", "expected_wait_s",
            "utilization", "expected_age_s", "expected_consumed_fidelity", "iota"]
    rows = []
    for lam in grid:
        r = analyze(params, window=args.window_slots, lam=float(lam), convention=args.convention)
        rows.append([float(lam), r.p_prime, r.max_age, r.avg_satisfaction, r.steady_satisfaction,
                     r.expected_wait, r.utilization, r.expected_age, r.expected_consumed_fidelity, r.iota])
    meta = {"scenario": scenario_to_document(params), "window_slots": args.window_slots,
            "convention": args.convention}
    _emit(to_csv(Table("metrics", cols, rows, meta)), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = _scenario(args)
    if args.slots < 1 or args.reps < 1:
        raise UsageError("--slots and --reps must be >= 1")
    if not 0 <= args.seed < 2**64:
        raise UsageError("--seed must be a 64-bit unsigned integer")
    analytic = analyze(params, window=min(args.slots, 1000))
    sim = run_simulation(SimConfig(params, args.slots, args.reps, args.seed))
    wait = run_simulation(SimConfig(params, args.slots, args.reps, args.seed, "retry_every_slot"))
    report = compare(sim, analytic, z=args.z, wait=wait)

    space = build_state_space(params)
    pi = steady_state(transition_matrix(space, params.request_distance, analytic.p_prime,
                                        params.request_rate))
    tv = total_variation(sim.empirical_state_histogram, pi, space)

    rows = [[r.name, r.simulated, r.stderr, r.analytic, r.delta, r.verdict] for r in report]
    rows.append(["state_histogram_tv", tv, math.nan, 0.0, tv, "PASS" if tv <= TV_LIMIT else "FLAG"])
    meta = {"scenario": scenario_to_document(params), "slots": args.slots, "reps": args.reps,
            "seed": args.seed, "z": args.z, **sim.metadata}
    _emit(to_csv(Table("simulate", ["metric", "simulated", "stderr", "analytic", "delta", "verdict"],
                       rows, meta)), args.out)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_dmax(args) -> int:
    params = _scenario(args)
    f_th, qber = params.noise.fidelity_threshold, params.noise.qber
    results = [dmax_closed_form(f_th, qber, params.optics)]
    if args.with_rotation:
        results.append(dmax_with_rotation(f_th, qber, params.optics, params.orbit,
                                          light_speed=params.timing.light_speed))
        results.append(dmax_link_model(params))
    rows = [[r.method, r.d_max / 1e3, r.residual, r.iterations] for r in results]
    table = Table("dmax", ["method", "dmax_km", "residual", "iterations"], rows,
                  {"scenario": scenario_to_document(params)})
    sys.stdout.write(to_csv(table))
    return EXIT_OK


def cmd_fixtures(args) -> int:
    if args.action == "build":
        for path in fx.build_fixtures(args.root, args.names or None):
            print(path)
        return EXIT_OK
    if args.action == "regenerate":
        for name in args.names or fx.list_fixtures(args.root):
            if fx.DEFINITIONS.get(name, {}).get("kind") != "reference":
                print(fx.regenerate(name, args.root))
        return EXIT_OK
    names = args.names or fx.list_fixtures(args.root)
    ok = True
    for name in names:
        result = fx.check_fixture(name, args.root)
        ok &= result.passed
        print(f"{'PASS' if result.passed else 'FAIL'} {name} {result.message}".rstrip())
        for d in result.failures:
            print(f"  row {d.row} {d.column}: expected {d.expected} got {d.actual} "
                  f"(|delta| {d.delta:.3g} > {d.tolerance:.3g})")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entm", description="Inter-satellite entanglement link model")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="scenario JSON (defaults if omitted)")
        return p

    p = with_config(sub.add_parser("link-budget", help="per-distance link budget"))
    p.add_argument("--distance-km", type=float)
    p.add_argument("--json", action="store_true")
    p.add_argument("--convention", choices=["storage_budget", "lifetime_floor"], default="storage_budget")
    p.set_defaults(func=cmd_link_budget)

    p = with_config(sub.add_parser("reproduce", help="write evaluation sweeps as CSV"))
    p.add_argument("--target", required=True, choices=[*TARGETS, "all"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reproduce)

    p = with_config(sub.add_parser("metrics", help="closed-form metrics over a lambda grid"))
    p.add_argument("--lambda-grid", help="start,stop,steps")
    p.add_argument("--window-slots", type=int, default=1000)
    p.add_argument("--convention", choices=["storage_budget", "lifetime_floor"], default="storage_budget")
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = with_config(sub.add_parser("simulate", help="Monte Carlo run compared with the closed forms"))
    p.add_argument("--slots", type=int, default=1_000_000)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--z", type=float, default=3.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = with_config(sub.add_parser("dmax", help="maximum one-hop distance"))
    p.add_argument("--with-rotation", action="store_true")
    p.set_defaults(func=cmd_dmax)

    p = sub.add_parser("fixtures", help="check, build or regenerate golden fixtures")
    p.add_argument("action", choices=["check", "build", "regenerate"])
    p.add_argument("names", nargs="*")
    p.add_argument("--root")
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InfeasibleLinkError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenarioError, UsageError, MissingFixtureError, FileNotFoundError, KeyError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
