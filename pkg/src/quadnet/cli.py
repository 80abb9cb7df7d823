"""Command line front end: single runs, seed sweeps, and the acceptance suite.

Exit codes: 0 success, 2 configuration error, 3 property violation,
4 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import acceptance, runner, sim

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VIOLATION = 3
EXIT_NON_CONVERGED = 4


def _parse_int_list(text: str) -> list[int]:
    """Accept '4', '1,2,8', and '2..32' (inclusive range)."""
    values: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            values.extend(range(int(lo), int(hi) + 1))
        elif part:
            values.append(int(part))
    if not values:
        return []
    return values


def _add_scenario_flags(p: argparse.ArgumentParser):
    p.add_argument("--n", type=int, help="number of nodes")
    p.add_argument("--dim", type=int, default=2, help="dimension (default 2)")
    p.add_argument("--bits", type=int, default=30,
                   help="fixed-point fraction bits per axis (default 30)")
    p.add_argument("--seed", type=int, default=1, help="scenario and schedule seed")
    p.add_argument("--placement", choices=sim.PLACEMENTS, default=sim.UNIFORM)
    p.add_argument("--init", choices=sim.TOPOLOGIES, default=sim.LIST_RANDOM,
                   dest="init_topology", help="initial topology shape")
    p.add_argument("--inflight", type=int, default=0,
                   help="count of pre-seeded in-flight messages")
    p.add_argument("--delta", type=int, default=3,
                   help="fairness bound in rounds (default 3)")
    p.add_argument("--policy", choices=sim.POLICIES, default=sim.RANDOM,
                   help="delivery policy")
    p.add_argument("--searches-per-round", type=int, default=2)
    p.add_argument("--max-rounds", type=int, default=None,
                   help="round budget (default 200*n)")
    p.add_argument("--closure-rounds", type=int, default=100,
                   help="extra rounds to run after convergence (default 100)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadnet",
        description="Self-stabilizing quadtree overlay: simulate, verify, report.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one monitored run")
    _add_scenario_flags(run)
    run.add_argument("--scenario", type=Path,
                     help="scenario JSON file (overrides inline flags)")
    run.add_argument("--out", type=Path, help="write the report JSON here")
    run.add_argument("--dot", type=Path, help="write final explicit edges as DOT")
    run.add_argument("--trace", type=Path, help="write the event trace as JSON lines")
    run.add_argument("--no-figures", action="store_true",
                     help="skip figure rendering next to --out")

    sweep = sub.add_parser("sweep", help="run a seeded grid of scenarios")
    sweep.add_argument("--n", required=True, help="node counts, e.g. 2..32 or 4,8")
    sweep.add_argument("--dims", default="2", help="dimensions, e.g. 2,3")
    sweep.add_argument("--seeds", required=True, help="seeds, e.g. 1..100")
    sweep.add_argument("--bits", type=int, default=30)
    sweep.add_argument("--placement", choices=sim.PLACEMENTS, default=sim.UNIFORM)
    sweep.add_argument("--init", choices=sim.TOPOLOGIES, default=None,
                       dest="init_topology",
                       help="pin one topology (default: cycle through all)")
    sweep.add_argument("--inflight", type=int, default=None,
                       help="in-flight messages (default: n)")
    sweep.add_argument("--delta", type=int, default=3)
    sweep.add_argument("--policy", choices=sim.POLICIES, default=sim.RANDOM)
    sweep.add_argument("--searches-per-round", type=int, default=2)
    sweep.add_argument("--max-rounds", type=int, default=None)
    sweep.add_argument("--closure-rounds", type=int, default=100)
    sweep.add_argument("--jobs", type=int, default=None,
                       help="parallel workers (default: cpu count)")
    sweep.add_argument("--out", type=Path, help="write per-run rows as CSV")
    sweep.add_argument("--no-figures", action="store_true")

    check = sub.add_parser("check", help="run the fixed acceptance suite")
    check.add_argument("--jobs", type=int, default=None)

    return parser


def _scenario_from_args(args):
    """Returns (config, explicit coords or None)."""
    if args.scenario is not None:
        obj = json.loads(args.scenario.read_text())
        if obj.get("schema") not in (None, sim.SCENARIO_SCHEMA):
            raise sim.ScenarioError(f"unsupported scenario schema {obj.get('schema')!r}")
        config = sim.ScenarioConfig.from_json(obj)
        coords = None
        if obj.get("nodes"):
            from dataclasses import replace

            from .space import Coord
            coords = [Coord(config.bits, tuple(axes)) for axes in obj["nodes"]]
            config = replace(config, n=len(coords))
        return config, coords
    if args.n is None:
        raise sim.ScenarioError("either --scenario or --n is required")
    return sim.ScenarioConfig(n=args.n, dim=args.dim, bits=args.bits,
                              placement=args.placement,
                              init_topology=args.init_topology,
                              init_inflight=args.inflight, seed=args.seed), None


def cmd_run(args) -> int:
    try:
        scenario, coords = _scenario_from_args(args)
        schedule = sim.ScheduleConfig(seed=args.seed, delta=args.delta,
                                      delivery_policy=args.policy,
                                      searches_per_round=args.searches_per_round,
                                      max_rounds=args.max_rounds)
    except (sim.ScenarioError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    trace_sink = None
    if args.trace:
        args.trace.parent.mkdir(parents=True, exist_ok=True)
        trace_sink = args.trace.open("w")
    try:
        report, state, _monitors = runner.execute_run(
            scenario, schedule, closure_rounds=args.closure_rounds,
            trace_sink=trace_sink, keep_state=True, coords=coords)
    finally:
        if trace_sink:
            trace_sink.close()

    print(f"outcome: {report.outcome}")
    print(f"converged_round: {report.converged_round}")
    print(f"violations: {report.total_violations}")
    print(f"searches finished: {report.searches_finished} (max {report.max_hops} hops)")
    print(f"trace hash: {report.trace_hash}")

    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_bytes(runner.report_to_json_bytes(report))
        print(f"report written to {args.out}")
        if not args.no_figures:
            from . import figures
            written = figures.render_run_figures(report, state,
                                                 args.out.parent, args.out.stem)
            for path in written:
                print(f"figure written to {path}")
    if args.dot:
        args.dot.parent.mkdir(parents=True, exist_ok=True)
        args.dot.write_bytes(sim.export_dot(state))
        print(f"dot written to {args.dot}")

    if report.total_violations:
        return EXIT_VIOLATION
    if report.outcome != runner.CONVERGED:
        return EXIT_NON_CONVERGED
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        ns = _parse_int_list(args.n)
        dims = _parse_int_list(args.dims)
        seeds = _parse_int_list(args.seeds)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    topologies = [args.init_topology] if args.init_topology else None
    jobs = runner.sweep_jobs(ns, dims, seeds, bits=args.bits,
                             placement=args.placement, topologies=topologies,
                             inflight=args.inflight, delta=args.delta,
                             policy=args.policy,
                             searches_per_round=args.searches_per_round,
                             max_rounds=args.max_rounds,
                             closure_rounds=args.closure_rounds)
    rows = runner.run_jobs(jobs, workers=args.jobs)

    bad = [r for r in rows if r["violations"]]
    unconverged = [r for r in rows if r["outcome"] != runner.CONVERGED]
    print(f"{len(rows)} runs, {len(unconverged)} non-converged, "
          f"{len(bad)} with violations")
    for row in bad[:5]:
        print(f"  violation: n={row['n']} d={row['dim']} "
              f"seed={row['scenario_seed']} kinds={row['violation_kinds']}")
    for row in unconverged[:5]:
        print(f"  non-converged: n={row['n']} d={row['dim']} "
              f"seed={row['scenario_seed']}")

    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(runner.rows_to_csv(rows))
        print(f"csv written to {args.out}")
        if not args.no_figures and rows:
            from . import figures
            written = figures.render_sweep_figures(rows, args.out.parent,
                                                   args.out.stem)
            for path in written:
                print(f"figure written to {path}")

    if bad:
        return EXIT_VIOLATION
    if unconverged:
        return EXIT_NON_CONVERGED
    return EXIT_OK


def cmd_check(args) -> int:
    results = acceptance.run_acceptance(workers=args.jobs)
    return EXIT_OK if acceptance.all_passed(results) else EXIT_VIOLATION


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "sweep":
        return cmd_sweep(args)
    if args.command == "check":
        return cmd_check(args)
    parser.error(f"unknown command {args.command!r}")
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
