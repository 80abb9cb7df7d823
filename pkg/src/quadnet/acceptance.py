"""The fixed acceptance suite: pinned seeds, pinned scales, pinned bounds.

Each criterion prints one pass/fail line; the suite passes only if every
criterion does.  The same engine backs ``quadnet check`` and the pytest
acceptance module.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from multiprocessing import Pool

from . import sim, verify
from .protocol import NodeState
from .runner import CONVERGED, SweepJob, execute_run, sweep_jobs
from .space import (
    Convention,
    Coord,
    GREATER,
    Geometry,
    LESS,
    interleave_compare,
    order_compare,
)

MAIN_NS = (1, 2, 3, 4, 8, 16, 32)
MAIN_SEED_COUNT = 100
D3_NS = (8, 16)
D3_SEED_COUNT = 25
MINDIST_NS = (4, 8, 16, 32, 64)
MINDIST_SEED_COUNT = 10
ORDER_PAIRS = 100_000
ORDER_TRIPLES = 10_000


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{self.number:>2}] {verdict} {self.name}: {self.detail}"


def _acceptance_row(job: SweepJob) -> dict:
    try:
        report = execute_run(job.scenario, job.schedule,
                             closure_rounds=job.closure_rounds)
    except Exception as exc:  # scheduler assertions count as failures, not crashes
        return {"error": f"{job.scenario.to_json()}: {type(exc).__name__}: {exc}",
                "scenario": job.scenario.to_json()}
    return {
        "error": None,
        "n": job.scenario.n,
        "dim": job.scenario.dim,
        "seed": job.scenario.seed,
        "init_topology": job.scenario.init_topology,
        "placement": job.scenario.placement,
        "outcome": report.outcome,
        "converged_round": report.converged_round,
        "violations": dict(report.violations),
        "max_hops": report.max_hops,
        "searches_finished": report.searches_finished,
        "trace_hash": report.trace_hash,
    }


def _run_rows(jobs: list[SweepJob], workers: int | None) -> list[dict]:
    if not jobs:
        return []
    if workers is None or workers > 1:
        with Pool(processes=workers) as pool:
            return list(pool.map(_acceptance_row, jobs, chunksize=4))
    return [_acceptance_row(job) for job in jobs]


def _matrix(ns, dims, seed_count, placement=sim.UNIFORM) -> list[SweepJob]:
    return sweep_jobs(ns, dims, range(1, seed_count + 1), placement=placement)


def _count(rows: list[dict], kind: str) -> int:
    return sum(row["violations"].get(kind, 0) for row in rows if not row["error"])


def _errors(rows: list[dict]) -> list[str]:
    return [row["error"] for row in rows if row["error"]]


def _fail_detail(rows, predicate, describe) -> str:
    bad = [row for row in rows if not row["error"] and not predicate(row)]
    bad += [{"error": e} for e in _errors(rows)]
    first = bad[0]
    head = first["error"] if first.get("error") else describe(first)
    return f"{len(bad)} offending runs; first: {head}"


def _criterion_converged(number, name, rows) -> CriterionResult:
    ok = not _errors(rows) and all(row["outcome"] == CONVERGED for row in rows)
    if ok:
        worst = max((row["converged_round"] for row in rows), default=0)
        detail = f"{len(rows)}/{len(rows)} runs legitimate within budget (worst {worst} rounds)"
    else:
        detail = _fail_detail(rows, lambda r: r["outcome"] == CONVERGED,
                              lambda r: f"n={r['n']} seed={r['seed']} "
                                        f"{r['init_topology']}: {r['outcome']}")
    return CriterionResult(number, name, ok, detail)


def _criterion_zero(number, name, rows, kinds) -> CriterionResult:
    total = sum(_count(rows, k) for k in kinds)
    ok = total == 0 and not _errors(rows)
    if ok:
        detail = f"0 {'/'.join(kinds)} violations across {len(rows)} runs"
    else:
        detail = _fail_detail(
            rows, lambda r: not any(r["violations"].get(k) for k in kinds),
            lambda r: f"n={r['n']} seed={r['seed']}: {r['violations']}")
    return CriterionResult(number, name, ok, detail)


def _q_monotone_negative_control() -> bool:
    """Artificially widen a node's neighbor window and require the monitor to
    flag the shrinking covering set."""
    u, v = Coord(4, (1, 9)), Coord(4, (3, 9))  # deep shared key prefix
    geometry = Geometry(2)
    nodes = verify.build_legitimate_nodes([u, v], geometry)
    state = sim.SystemState(geometry, 4, nodes)
    monitors = verify.RunMonitors(state)
    monitors.after_action(v, NodeState(v, u, None))
    monitors.after_action(v, NodeState(v, None, None))
    return monitors.counts[verify.Q_MONOTONE] > 0


def _criterion_order_oracle(number) -> CriterionResult:
    detail_parts = []
    for dim in (2, 3, 4):
        rng = random.Random(1000 + dim)
        conv = Convention.default(dim)
        bits = 30

        def coord():
            return Coord(bits, tuple(rng.randrange(1 << bits) | 1
                                     for _ in range(dim)))

        mismatches = asym = 0
        for _ in range(ORDER_PAIRS):
            u, v = coord(), coord()
            while v.axes == u.axes:
                v = coord()
            a = order_compare(u, v, conv)
            if a != interleave_compare(u, v, conv):
                mismatches += 1
            if order_compare(v, u, conv) != -a:
                asym += 1
        cyclic = 0
        for _ in range(ORDER_TRIPLES):
            pts = {coord() for _ in range(3)}
            while len(pts) < 3:
                pts.add(coord())
            a, b, c = pts
            ab = order_compare(a, b, conv) is LESS
            bc = order_compare(b, c, conv) is LESS
            ca = order_compare(c, a, conv) is LESS
            if ab == bc == ca:
                cyclic += 1
        if mismatches or asym or cyclic:
            return CriterionResult(
                number, "ordering oracle equivalence", False,
                f"d={dim}: {mismatches} oracle mismatches, {asym} antisymmetry "
                f"breaks, {cyclic} cyclic triples")
        detail_parts.append(f"d={dim}: {ORDER_PAIRS} pairs agree")
    return CriterionResult(number, "ordering oracle equivalence", True,
                           "; ".join(detail_parts))


def _criterion_determinism(number, samples: list[SweepJob],
                           first_hashes: list[str], workers) -> CriterionResult:
    rerun = _run_rows(samples, workers)
    for job, row, expected in zip(samples, rerun, first_hashes):
        if row["error"] or row["trace_hash"] != expected:
            return CriterionResult(
                number, "deterministic replay", False,
                f"n={job.scenario.n} d={job.scenario.dim} "
                f"seed={job.scenario.seed}: trace hash changed on replay")
    return CriterionResult(number, "deterministic replay", True,
                           f"{len(samples)} replays hash-identical")


def run_acceptance(workers: int | None = None, echo=print) -> list[CriterionResult]:
    results: list[CriterionResult] = []

    def push(result: CriterionResult):
        results.append(result)
        if echo:
            echo(result.line())

    main_rows = _run_rows(_matrix(MAIN_NS, (2,), MAIN_SEED_COUNT), workers)
    push(_criterion_converged(1, "convergence (d=2 matrix)", main_rows))
    push(_criterion_zero(2, "closure after convergence", main_rows,
                         (verify.CLOSURE,)))
    push(_criterion_zero(3, "geographic monotonic searchability", main_rows,
                         (verify.MONOTONIC_GEO,)))
    push(_criterion_zero(4, "standard monotonic searchability", main_rows,
                         (verify.MONOTONIC_STD,)))

    md_rows = _run_rows(_matrix(MINDIST_NS, (2,), MINDIST_SEED_COUNT,
                                placement=sim.MIN_DIST), workers)
    hop = _criterion_zero(5, "hop and distance bounds (min-dist runs)", md_rows,
                          (verify.HOP_BOUND, verify.DISTANCE_BOUND))
    if hop.passed:
        worst = max((row["max_hops"] for row in md_rows), default=0)
        hop.detail += f"; worst observed {worst} hops"
    push(hop)

    q_ok = _count(main_rows, verify.Q_MONOTONE) == 0
    control = _q_monotone_negative_control()
    push(CriterionResult(
        6, "covering-set monotonicity", q_ok and control,
        ("0 violations in protocol runs; negative control fires"
         if q_ok and control else
         f"protocol violations: {_count(main_rows, verify.Q_MONOTONE)}, "
         f"negative control fired: {control}")))

    push(_criterion_zero(7, "connectivity preservation", main_rows,
                         (verify.CONNECTIVITY,)))

    push(_criterion_order_oracle(8))

    d3_rows = _run_rows(_matrix(D3_NS, (3,), D3_SEED_COUNT), workers)
    conv9 = not _errors(d3_rows) and all(r["outcome"] == CONVERGED for r in d3_rows)
    clean9 = all(not r["violations"] for r in d3_rows if not r["error"])
    if conv9 and clean9:
        detail = f"{len(d3_rows)}/{len(d3_rows)} d=3 runs converged, zero violations"
    else:
        detail = _fail_detail(
            d3_rows, lambda r: r["outcome"] == CONVERGED and not r["violations"],
            lambda r: f"n={r['n']} seed={r['seed']}: {r['outcome']} {r['violations']}")
    push(CriterionResult(9, "three-dimensional generalization", conv9 and clean9,
                         detail))

    sample_jobs, sample_hashes = [], []
    pool = [( _matrix(MAIN_NS, (2,), MAIN_SEED_COUNT), main_rows),
            (_matrix(MINDIST_NS, (2,), MINDIST_SEED_COUNT, placement=sim.MIN_DIST),
             md_rows),
            (_matrix(D3_NS, (3,), D3_SEED_COUNT), d3_rows)]
    for jobs, rows in pool:
        for pick in (0, len(jobs) - 1):
            row = rows[pick]
            if not row["error"]:
                sample_jobs.append(jobs[pick])
                sample_hashes.append(row["trace_hash"])
    push(_criterion_determinism(10, sample_jobs, sample_hashes, workers))

    return results


def all_passed(results: list[CriterionResult]) -> bool:
    return all(r.passed for r in results)
