"""Scheduler and scenario tests: fairness, determinism, generation, exports."""

from __future__ import annotations

import json
import random

import pytest

from quadnet import protocol, sim, verify
from quadnet.space import Coord, Geometry, contains


def make_run(n=6, seed=1, topo=sim.LIST_RANDOM, inflight=0, dim=2, bits=16,
             placement=sim.UNIFORM):
    scenario = sim.ScenarioConfig(n=n, dim=dim, bits=bits, placement=placement,
                                  init_topology=topo, init_inflight=inflight,
                                  seed=seed)
    return sim.generate_scenario(scenario), sim.ScheduleConfig(seed=seed)


# --- generation ---------------------------------------------------------------


def test_coordinates_are_odd_and_unique():
    state, _ = make_run(n=20, seed=3)
    axes = [c.axes for c in state.nodes]
    assert len(set(axes)) == 20
    assert all(a % 2 == 1 for tup in axes for a in tup)


def test_min_dist_placement_separation_is_exact():
    for n in (2, 3, 4, 16):
        scenario = sim.ScenarioConfig(n=n, bits=16, placement=sim.MIN_DIST, seed=5)
        state = sim.generate_scenario(scenario)
        coords = list(state.nodes)
        # brute-force exact check: n^2 * dist_units^2 >= (2^bits)^2
        for i, u in enumerate(coords):
            for v in coords[i + 1:]:
                d2 = sum((a - b) ** 2 for a, b in zip(u.axes, v.axes))
                assert n * n * d2 >= (1 << 16) ** 2


def test_min_dist_unsatisfiable_placement_faults():
    with pytest.raises(sim.ScenarioError):
        sim.generate_scenario(sim.ScenarioConfig(n=16, bits=2,
                                                 placement=sim.MIN_DIST, seed=1))


def test_generated_graph_is_weakly_connected():
    for topo in sim.TOPOLOGIES:
        for seed in range(1, 6):
            state, _ = make_run(n=9, seed=seed, topo=topo, inflight=9)
            assert sim.weakly_connected(state)


def test_quad_only_topology_has_no_list_edges():
    state, _ = make_run(n=8, seed=2, topo=sim.QUAD_ONLY)
    assert all(ns.left is None and ns.right is None for ns in state.nodes.values())
    assert any(ns.quad for ns in state.nodes.values())


def test_initial_inflight_messages_reference_existing_nodes():
    state, _ = make_run(n=6, seed=4, topo=sim.STAR, inflight=12)
    assert state.inflight_count() == 12
    for box in state.mailboxes.values():
        for env in box:
            assert env.enqueue_round == -1
            for c in protocol.message_coords(env.message):
                assert c in state.nodes


def test_single_node_scenario_is_already_legitimate():
    state, _ = make_run(n=1, seed=1)
    legit, violations = verify.is_legitimate(state)
    assert legit, violations


def test_explicit_node_list_round_trip():
    coords = [Coord(8, (9, 33)), Coord(8, (101, 201))]
    scenario = sim.ScenarioConfig(n=2, bits=8, seed=1)
    state = sim.generate_scenario(scenario, coords=coords)
    assert set(state.nodes) == set(coords)


# --- rounds and fairness ---------------------------------------------------------


def test_round_fires_every_timeout_once():
    state, schedule = make_run(n=5, seed=2)
    recorder = sim.TraceRecorder(keep=True)
    rng = random.Random(0)
    sim.run_round(state, schedule, rng, recorder)
    timeouts = [e for e in recorder.events if e.kind == "TIMEOUT"]
    assert len(timeouts) == 5
    assert {e.node for e in timeouts} == set(state.nodes)


@pytest.mark.parametrize("policy", sim.POLICIES)
def test_no_message_outlives_delta(policy):
    state, _ = make_run(n=6, seed=7, topo=sim.LINE, inflight=6)
    schedule = sim.ScheduleConfig(seed=7, delta=3, delivery_policy=policy)
    rng = random.Random(7)
    for _ in range(30):
        sim.run_round(state, schedule, rng)  # raises if the bound is broken
        for box in state.mailboxes.values():
            for env in box:
                assert state.round_counter - 1 - env.enqueue_round < schedule.delta


def test_oldest_last_policy_ages_messages_to_the_deadline():
    state, _ = make_run(n=6, seed=9, topo=sim.LINE)
    schedule = sim.ScheduleConfig(seed=9, delta=3,
                                  delivery_policy=sim.OLDEST_LAST)
    rng = random.Random(9)
    max_age = 0
    for _ in range(10):
        sim.run_round(state, schedule, rng)
        for box in state.mailboxes.values():
            for env in box:
                max_age = max(max_age, state.round_counter - 1 - env.enqueue_round)
    assert max_age == schedule.delta - 1  # survives delta-1 full rounds, never delta


def test_message_accounting_no_loss_no_duplication():
    state, schedule = make_run(n=6, seed=3, inflight=6)
    rng = random.Random(3)
    for _ in range(20):
        sim.run_round(state, schedule, rng)
    assert state.enqueued_total == state.delivered_total + state.inflight_count()
    seqs = [env.seq for box in state.mailboxes.values() for env in box]
    assert len(seqs) == len(set(seqs))


def test_schedule_config_validation():
    with pytest.raises(ValueError):
        sim.ScheduleConfig(delta=0)
    with pytest.raises(ValueError):
        sim.ScheduleConfig(delivery_policy="fifo")


def test_delivery_applies_handler_effects():
    u, v = Coord(8, (9, 33)), Coord(8, (101, 201))
    geometry = Geometry(2)
    nodes = {c: protocol.NodeState(c) for c in (u, v)}
    state = sim.SystemState(geometry, 8, nodes)
    state.enqueue(v, protocol.Linearize(u))
    rng = random.Random(0)
    side = "left" if geometry.precedes(u, v) else "right"
    for _ in range(200):
        if getattr(state.nodes[v], side) == u:
            break
        sim.step(state, rng)
    assert getattr(state.nodes[v], side) == u


def test_step_executes_single_action():
    state, schedule = make_run(n=3, seed=5)
    recorder = sim.TraceRecorder(keep=True)
    rng = random.Random(1)
    sim.step(state, rng, recorder)
    assert len(recorder.events) >= 1
    assert state.step_counter == 1


def test_step_with_empty_mailboxes_only_timeouts_enabled():
    state, schedule = make_run(n=3, seed=5)
    recorder = sim.TraceRecorder(keep=True)
    rng = random.Random(2)
    sim.step(state, rng, recorder)
    kinds = {e.kind for e in recorder.events}
    assert "TIMEOUT" in kinds
    assert "DELIVER" not in kinds


def test_run_until_respects_budget():
    state, schedule = make_run(n=4, seed=6)
    reached, converged = sim.run_until(state, schedule, lambda s: False,
                                       max_rounds=10)
    assert (reached, converged) == (10, False)


def test_run_until_stop_checked_before_running():
    state, schedule = make_run(n=1, seed=6)
    reached, converged = sim.run_until(
        state, schedule, lambda s: verify.is_legitimate(s)[0], max_rounds=10)
    assert (reached, converged) == (0, True)


def test_two_adjacent_nodes_converge_quickly():
    # regression baseline: a correct 2-node list completes its quad edges fast
    coords = [Coord(8, (9, 33)), Coord(8, (101, 201))]
    scenario = sim.ScenarioConfig(n=2, bits=8, init_topology=sim.LINE, seed=1)
    state = sim.generate_scenario(scenario, coords=coords)
    schedule = sim.ScheduleConfig(seed=1)
    reached, converged = sim.run_until(
        state, schedule, lambda s: verify.is_legitimate(s)[0], max_rounds=60)
    assert converged
    assert reached <= 20


# --- determinism -------------------------------------------------------------------


def _trace_hash(seed, rounds=12):
    state, schedule = make_run(n=7, seed=seed, topo=sim.RANDOM_MIXED, inflight=7)
    recorder = sim.TraceRecorder()
    rng = random.Random(schedule.seed)
    workload = sim.SearchWorkload(2)
    for _ in range(rounds):
        sim.run_round(state, schedule, rng, recorder, workload=workload)
    return recorder.hexdigest(), state


def test_replay_is_bit_identical():
    h1, s1 = _trace_hash(21)
    h2, s2 = _trace_hash(21)
    assert h1 == h2
    assert s1 == s2
    h3, _ = _trace_hash(22)
    assert h3 != h1


# --- exports ------------------------------------------------------------------------


def test_snapshot_round_trip():
    _, state = _trace_hash(31, rounds=5)
    blob = sim.export_snapshot(state)
    restored = sim.import_snapshot(blob)
    assert restored == state
    assert sim.export_snapshot(restored) == blob


def test_trace_export_shape():
    state, schedule = make_run(n=3, seed=8)
    recorder = sim.TraceRecorder(keep=True)
    rng = random.Random(8)
    sim.run_round(state, schedule, rng, recorder)
    lines = sim.export_trace(recorder.events).decode().splitlines()
    assert json.loads(lines[0])["schema"] == sim.TRACE_SCHEMA
    for line in lines[1:]:
        event = json.loads(line)
        assert event["kind"] in ("TIMEOUT", "DELIVER", "SEARCH_START", "SEARCH_END")
    assert sim.export_trace([]).decode().splitlines()[1:] == []


def test_dot_export_of_legitimate_pair():
    coords = [Coord(8, (9, 33)), Coord(8, (101, 201))]
    geometry = Geometry(2)
    nodes = verify.build_legitimate_nodes(coords, geometry)
    state = sim.SystemState(geometry, 8, nodes)
    dot = sim.export_dot(state).decode()
    assert dot.count('kind="list"') == 2   # u->v and v->u
    assert dot.count('kind="quad"') == 2   # each covers the other's half
    assert dot.startswith("digraph")
