"""Single-run and sweep orchestration: monitor wiring, reports, CSV output."""

from __future__ import annotations

import csv
import io
import json
import random
import time
from dataclasses import dataclass
from multiprocessing import Pool

from . import sim, verify

REPORT_SCHEMA = "quadnet-report-1"

CONVERGED = "CONVERGED"
NON_CONVERGED = "NON_CONVERGED"


@dataclass
class RunReport:
    """Summary verdict of one monitored run."""

    scenario: dict
    schedule: dict
    outcome: str
    converged_round: int | None
    rounds_executed: int
    closure_rounds: int
    violations: dict[str, int]
    violation_samples: list[dict]
    hop_histogram: dict[int, int]
    max_hops: int
    searches_started: int
    searches_finished: int
    message_totals: dict[str, int]
    messages_per_round: list[dict[str, int]]
    trace_hash: str
    wall_time_s: float

    def to_json(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "scenario": self.scenario,
            "schedule": self.schedule,
            "outcome": self.outcome,
            "converged_round": self.converged_round,
            "rounds_executed": self.rounds_executed,
            "closure_rounds": self.closure_rounds,
            "violations": self.violations,
            "violation_samples": self.violation_samples,
            "hop_histogram": {str(k): v for k, v in sorted(self.hop_histogram.items())},
            "max_hops": self.max_hops,
            "searches": {"started": self.searches_started,
                         "finished": self.searches_finished},
            "message_totals": self.message_totals,
            "messages_per_round": self.messages_per_round,
            "trace_hash": self.trace_hash,
            "wall_time_s": self.wall_time_s,
        }

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())


def execute_run(scenario: sim.ScenarioConfig, schedule: sim.ScheduleConfig, *,
                closure_rounds: int = 100, keep_events: bool = False,
                trace_sink=None, keep_state: bool = False, coords=None):
    """Run one seeded scenario with all monitors attached.

    Runs until the legitimacy oracle accepts the state (then ``closure_rounds``
    further rounds under the same workload) or until the round budget is
    spent.  Returns the report, plus the final state when ``keep_state``.
    """
    started = time.perf_counter()
    state = sim.generate_scenario(scenario, coords=coords)
    monitors = verify.RunMonitors(
        state, check_hop_bound=(scenario.placement == sim.MIN_DIST))
    recorder = sim.TraceRecorder(keep=keep_events, sink=trace_sink)
    workload = sim.SearchWorkload(schedule.searches_per_round)
    rng = random.Random(schedule.seed)
    limit = schedule.max_rounds if schedule.max_rounds is not None else 200 * scenario.n

    monitors.check_initial(state)
    while monitors.converged_round is None and state.round_counter < limit:
        sim.run_round(state, schedule, rng, recorder, monitors, workload)
        monitors.on_round_end(state)

    extra = 0
    if monitors.converged_round is not None:
        monitors.activate_closure(state)
        for _ in range(closure_rounds):
            sim.run_round(state, schedule, rng, recorder, monitors, workload)
            monitors.on_round_end(state)
            extra += 1

    hop_histogram: dict[int, int] = {}
    for records in monitors.ledger.by_key.values():
        for record in records:
            hop_histogram[record.hops] = hop_histogram.get(record.hops, 0) + 1

    rounds = state.round_counter
    per_round = [dict(sorted(state.sent_per_round.get(r, {}).items()))
                 for r in range(rounds)]
    report = RunReport(
        scenario=scenario.to_json(),
        schedule=schedule.to_json(),
        outcome=CONVERGED if monitors.converged_round is not None else NON_CONVERGED,
        converged_round=monitors.converged_round,
        rounds_executed=rounds,
        closure_rounds=extra,
        violations={k: v for k, v in monitors.counts.items() if v},
        violation_samples=[v.to_json() for v in monitors.violations],
        hop_histogram=hop_histogram,
        max_hops=monitors.max_hops,
        searches_started=monitors.ledger.started,
        searches_finished=monitors.ledger.finished,
        message_totals=dict(sorted(state.sent_by_type.items())),
        messages_per_round=per_round,
        trace_hash=recorder.hexdigest(),
        wall_time_s=round(time.perf_counter() - started, 6),
    )
    if keep_state:
        return report, state, monitors
    return report


# --- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepJob:
    scenario: sim.ScenarioConfig
    schedule: sim.ScheduleConfig
    closure_rounds: int = 100


def run_job(job: SweepJob) -> dict:
    """One sweep cell, reduced to a flat picklable row."""
    report = execute_run(job.scenario, job.schedule,
                         closure_rounds=job.closure_rounds)
    return report_row(report)


def report_row(report: RunReport) -> dict:
    sc, sch = report.scenario, report.schedule
    return {
        "n": sc["n"],
        "dim": sc["dimension"],
        "bits": sc["bits"],
        "placement": sc["placement"],
        "init_topology": sc["init_topology"],
        "init_inflight": sc["init_inflight"],
        "scenario_seed": sc["seed"],
        "schedule_seed": sch["seed"],
        "delta": sch["delta"],
        "policy": sch["delivery_policy"],
        "outcome": report.outcome,
        "converged_round": report.converged_round,
        "rounds_executed": report.rounds_executed,
        "violations": report.total_violations,
        "violation_kinds": ",".join(sorted(report.violations)),
        "max_hops": report.max_hops,
        "searches_finished": report.searches_finished,
        "trace_hash": report.trace_hash,
        "wall_time_s": report.wall_time_s,
    }


SWEEP_FIELDS = ["n", "dim", "bits", "placement", "init_topology", "init_inflight",
                "scenario_seed", "schedule_seed", "delta", "policy", "outcome",
                "converged_round", "rounds_executed", "violations",
                "violation_kinds", "max_hops", "searches_finished", "trace_hash",
                "wall_time_s"]


def run_jobs(jobs: list[SweepJob], workers: int | None = None) -> list[dict]:
    """Execute independent runs, in parallel when workers allow; results come
    back in job order regardless of completion order."""
    if not jobs:
        return []
    if workers is None or workers > 1:
        with Pool(processes=workers) as pool:
            return list(pool.map(run_job, jobs, chunksize=1))
    return [run_job(job) for job in jobs]


def sweep_jobs(ns, dims, seeds, *, bits=30, placement=sim.UNIFORM,
               topologies=None, inflight=None, delta=3, policy=sim.RANDOM,
               searches_per_round=2, max_rounds=None,
               closure_rounds=100) -> list[SweepJob]:
    """Cartesian sweep grid; the init topology cycles with the seed unless
    pinned."""
    jobs = []
    cycle = topologies if topologies else list(sim.TOPOLOGIES)
    for d in dims:
        for n in ns:
            for i, seed in enumerate(seeds):
                topo = cycle[i % len(cycle)]
                fly = n if inflight is None else inflight
                scenario = sim.ScenarioConfig(
                    n=n, dim=d, bits=bits, placement=placement,
                    init_topology=topo, init_inflight=fly, seed=seed)
                schedule = sim.ScheduleConfig(
                    seed=seed, delta=delta, delivery_policy=policy,
                    searches_per_round=searches_per_round, max_rounds=max_rounds)
                jobs.append(SweepJob(scenario, schedule, closure_rounds))
    return jobs


def rows_to_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=SWEEP_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return out.getvalue()


def report_to_json_bytes(report: RunReport) -> bytes:
    return (json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n").encode()
