"""Deterministic asynchronous execution of the overlay protocol.

Mailboxes are unordered; a seeded scheduler picks delivery order and may
defer any message for up to ``delta`` rounds, which realizes fair receipt
while leaving room for adversarial non-FIFO schedules.  Identical scenario
and schedule seeds replay the identical trace, byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from dataclasses import dataclass, field

from . import protocol
from .space import (
    Convention,
    Coord,
    Geometry,
    Point,
    coord_from_json,
    coord_to_json,
    point_to_json,
    split,
)

RANDOM = "random"
LIFO = "lifo"
OLDEST_LAST = "oldest-last"
POLICIES = (RANDOM, LIFO, OLDEST_LAST)

UNIFORM = "uniform"
MIN_DIST = "min-dist"
PLACEMENTS = (UNIFORM, MIN_DIST)

LIST_RANDOM = "list-random"
QUAD_ONLY = "quad-only"
LINE = "line"
STAR = "star"
RANDOM_MIXED = "mixed"
TOPOLOGIES = (LIST_RANDOM, QUAD_ONLY, LINE, STAR, RANDOM_MIXED)

SCENARIO_SCHEMA = "quadnet-scenario-1"
SNAPSHOT_SCHEMA = "quadnet-snapshot-1"
TRACE_SCHEMA = "quadnet-trace-1"


class ScenarioError(Exception):
    """The requested scenario cannot be generated."""


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    dim: int = 2
    bits: int = 30
    placement: str = UNIFORM
    init_topology: str = LIST_RANDOM
    init_inflight: int = 0
    seed: int = 0

    def to_json(self) -> dict:
        return {"schema": SCENARIO_SCHEMA, "n": self.n, "dimension": self.dim,
                "bits": self.bits, "placement": self.placement,
                "init_topology": self.init_topology,
                "init_inflight": self.init_inflight, "seed": self.seed}

    @staticmethod
    def from_json(obj: dict) -> "ScenarioConfig":
        return ScenarioConfig(n=obj["n"], dim=obj.get("dimension", 2),
                              bits=obj.get("bits", 30),
                              placement=obj.get("placement", UNIFORM),
                              init_topology=obj.get("init_topology", LIST_RANDOM),
                              init_inflight=obj.get("init_inflight", 0),
                              seed=obj.get("seed", 0))


@dataclass(frozen=True)
class ScheduleConfig:
    seed: int = 0
    delta: int = 3
    delivery_policy: str = RANDOM
    searches_per_round: int = 2
    max_rounds: int | None = None  # None resolves to 200*n at run time

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError("delta must be at least 1")
        if self.delivery_policy not in POLICIES:
            raise ValueError(f"unknown delivery policy {self.delivery_policy!r}")

    def to_json(self) -> dict:
        return {"seed": self.seed, "delta": self.delta,
                "delivery_policy": self.delivery_policy,
                "searches_per_round": self.searches_per_round,
                "max_rounds": self.max_rounds}


@dataclass(frozen=True)
class Envelope:
    """One in-flight message inside a mailbox."""

    seq: int
    message: protocol.Message
    enqueue_round: int
    parent: int | None = None  # seq of the message whose handling emitted this


@dataclass(frozen=True)
class TraceEvent:
    step: int
    kind: str  # TIMEOUT | DELIVER | SEARCH_START | SEARCH_END
    node: Coord | None
    info: dict


def _event_json(event: TraceEvent) -> dict:
    return {"step": event.step, "kind": event.kind,
            "node": None if event.node is None else coord_to_json(event.node),
            "info": event.info}


class TraceRecorder:
    """Hashes every event into a replay fingerprint; optionally keeps or
    streams the events themselves."""

    def __init__(self, keep: bool = False, sink=None):
        self._sha = hashlib.sha256()
        self.events: list[TraceEvent] | None = [] if keep else None
        self._sink = sink
        self.count = 0

    def record(self, event: TraceEvent):
        line = json.dumps(_event_json(event), sort_keys=True, separators=(",", ":"))
        self._sha.update(line.encode())
        self._sha.update(b"\n")
        self.count += 1
        if self.events is not None:
            self.events.append(event)
        if self._sink is not None:
            self._sink.write(line + "\n")

    def hexdigest(self) -> str:
        return self._sha.hexdigest()


class _NullRecorder:
    def record(self, event):
        pass


NULL_RECORDER = _NullRecorder()


class _NullMonitors:
    def on_search_start(self, request_id, initiator, target, step, round_):
        pass

    def on_search_end(self, search, termination, step, round_):
        pass

    def after_action(self, coord, state_round):
        pass


NULL_MONITORS = _NullMonitors()


class SystemState:
    """All node states plus per-node unordered mailboxes."""

    def __init__(self, geometry: Geometry, bits: int,
                 nodes: dict[Coord, protocol.NodeState]):
        self.geometry = geometry
        self.bits = bits
        self.nodes = nodes
        self.mailboxes: dict[Coord, list[Envelope]] = {c: [] for c in nodes}
        self.step_counter = 0
        self.round_counter = 0
        self.next_seq = 0
        self.next_request_id = 0
        self.enqueued_total = 0
        self.delivered_total = 0
        self.sent_by_type: Counter = Counter()
        self.sent_per_round: dict[int, Counter] = {}
        self._sorted: list[Coord] | None = None

    def coords_sorted(self) -> list[Coord]:
        if self._sorted is None:
            self._sorted = sorted(self.nodes, key=self.geometry.key)
        return self._sorted

    def inflight_count(self) -> int:
        return sum(len(box) for box in self.mailboxes.values())

    def enqueue(self, dst: Coord, message: protocol.Message,
                parent: int | None = None, enqueue_round: int | None = None):
        if dst not in self.mailboxes:
            raise KeyError(f"destination {dst} is not a node of this system")
        rnd = self.round_counter if enqueue_round is None else enqueue_round
        env = Envelope(self.next_seq, message, rnd, parent)
        self.next_seq += 1
        self.mailboxes[dst].append(env)
        self.enqueued_total += 1
        name = type(message).__name__.lower()
        self.sent_by_type[name] += 1
        self.sent_per_round.setdefault(rnd, Counter())[name] += 1
        return env

    def __eq__(self, other):
        if not isinstance(other, SystemState):
            return NotImplemented
        return (self.bits == other.bits
                and self.geometry.dim == other.geometry.dim
                and self.geometry.convention == other.geometry.convention
                and self.nodes == other.nodes
                and self.mailboxes == other.mailboxes
                and self.step_counter == other.step_counter
                and self.round_counter == other.round_counter
                and self.next_seq == other.next_seq
                and self.next_request_id == other.next_request_id)


# --- scenario generation -----------------------------------------------------


def _random_odd(rng: random.Random, lo: int, hi: int) -> int:
    """Uniform odd value in [lo, hi]."""
    first = lo if lo % 2 == 1 else lo + 1
    if first > hi:
        raise ScenarioError(f"no odd value in [{lo}, {hi}]")
    return first + 2 * rng.randrange((hi - first) // 2 + 1)


def _place_uniform(cfg: ScenarioConfig, rng: random.Random) -> list[Coord]:
    seen: set[tuple[int, ...]] = set()
    coords: list[Coord] = []
    top = 1 << cfg.bits
    while len(coords) < cfg.n:
        axes = tuple(rng.randrange(top) | 1 for _ in range(cfg.dim))
        if axes not in seen:
            seen.add(axes)
            coords.append(Coord(cfg.bits, axes))
    return coords


def _place_min_dist(cfg: ScenarioConfig, rng: random.Random) -> list[Coord]:
    """Jittered grid placement with pairwise Euclidean distance >= 1/n.

    One point per selected grid cell; the jitter is bounded so that points in
    different cells differ by at least ceil(2^bits / n) grid units on the
    axis where their cells differ.
    """
    n, dim, bits = cfg.n, cfg.dim, cfg.bits
    if n == 1:
        return _place_uniform(cfg, rng)
    m = 1
    while (1 << (m * dim)) < n:
        m += 1
    if bits <= m:
        raise ScenarioError(f"bits={bits} too small for a 1/{n}-separated grid")
    cell = 1 << (bits - m)
    sep = -(-(1 << bits) // n)  # ceil(2^bits / n)
    if cell < sep:
        raise ScenarioError(f"no 1/{n}-separated placement on a 2^{m} grid")
    spread = cell - sep
    base = (cell - spread) // 2
    fixed = (cell // 2) | 1  # shared odd offset when there is no slack
    coords = []
    for index in rng.sample(range(1 << (m * dim)), n):
        axes = []
        for axis in range(dim):
            cell_index = (index >> (axis * m)) & ((1 << m) - 1)
            offset = fixed if spread == 0 else _random_odd(rng, base, base + spread)
            axes.append(cell_index * cell + offset)
        coords.append(Coord(bits, tuple(axes)))
    return coords


def _init_topology(cfg: ScenarioConfig, rng: random.Random,
                   coords: list[Coord]) -> dict[Coord, protocol.NodeState]:
    order = coords[:]
    rng.shuffle(order)
    slots = {c: {"left": None, "right": None, "quad": set()} for c in coords}
    if len(coords) == 1:
        # a lone node has nothing to point at; it starts legitimate
        return {coords[0]: protocol.NodeState(coords[0])}

    def chain_right():
        for i in range(len(order) - 1):
            slots[order[i]]["right"] = order[i + 1]

    topo = cfg.init_topology
    if topo == LIST_RANDOM:
        chain_right()
        for c in coords:
            if rng.random() < 0.7:
                slots[c]["left"] = rng.choice(coords)
    elif topo == QUAD_ONLY:
        for i in range(len(order) - 1):
            slots[order[i]]["quad"].add(order[i + 1])
        for c in coords:
            for _ in range(rng.randrange(3)):
                slots[c]["quad"].add(rng.choice(coords))
    elif topo == LINE:
        for i in range(len(order) - 1):
            slots[order[i]]["right"] = order[i + 1]
            slots[order[i + 1]]["left"] = order[i]
    elif topo == STAR:
        hub = order[0]
        for c in order[1:]:
            slots[c]["left" if rng.random() < 0.5 else "right"] = hub
    elif topo == RANDOM_MIXED:
        for i in range(len(order) - 1):
            kind = rng.randrange(3)
            succ = order[i + 1]
            if kind == 0:
                slots[order[i]]["left"] = succ
            elif kind == 1:
                slots[order[i]]["right"] = succ
            else:
                slots[order[i]]["quad"].add(succ)
        for c in coords:
            if rng.random() < 0.5:
                slots[c]["left"] = rng.choice(coords)
            if rng.random() < 0.5:
                slots[c]["right"] = rng.choice(coords)
            for _ in range(rng.randrange(2)):
                slots[c]["quad"].add(rng.choice(coords))
    else:
        raise ScenarioError(f"unknown init topology {topo!r}")

    return {c: protocol.NodeState(c, s["left"], s["right"], frozenset(s["quad"]))
            for c, s in slots.items()}


def _random_region(geo: Geometry, rng: random.Random):
    region = geo.root
    for _ in range(rng.randrange(1, 5)):
        region = split(region)[rng.randrange(2)]
    return region


def _inject_inflight(cfg: ScenarioConfig, rng: random.Random, state: SystemState,
                     coords: list[Coord]):
    # Pre-seeded traffic counts as enqueued before round 0 so the fairness
    # bound forces consumption within the first delta rounds.
    for _ in range(cfg.init_inflight):
        dst = rng.choice(coords)
        w = rng.choice(coords)
        if rng.random() < 0.5:
            msg: protocol.Message = protocol.Linearize(w)
        else:
            area = _random_region(state.geometry, rng) if rng.random() < 0.5 else None
            msg = protocol.QLinearize(w, area)
        state.enqueue(dst, msg, enqueue_round=-1)


def weakly_connected(state: SystemState) -> bool:
    """Connectivity of explicit plus implicit edges, directions ignored."""
    coords = list(state.nodes)
    if len(coords) <= 1:
        return True
    index = {c: i for i, c in enumerate(coords)}
    parent = list(range(len(coords)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(a, b):
        ra, rb = find(index[a]), find(index[b])
        if ra != rb:
            parent[ra] = rb

    for c, ns in state.nodes.items():
        for other in (ns.left, ns.right, *ns.quad):
            if other is not None and other in index:
                union(c, other)
    for owner, box in state.mailboxes.items():
        for env in box:
            for c in protocol.message_coords(env.message):
                if c in index:
                    union(owner, c)
    root = find(0)
    return all(find(i) == root for i in range(len(coords)))


def generate_scenario(cfg: ScenarioConfig,
                      coords: list[Coord] | None = None) -> SystemState:
    """Build the seeded initial system: placement, topology, in-flight mail.

    The generated graph of explicit and implicit edges is weakly connected;
    anything else is a generator bug and raises immediately.
    """
    if cfg.n < 1:
        raise ScenarioError("need at least one node")
    if cfg.dim < 2:
        raise ScenarioError("dimension must be at least 2")
    if cfg.placement not in PLACEMENTS:
        raise ScenarioError(f"unknown placement {cfg.placement!r}")
    if cfg.init_topology not in TOPOLOGIES:
        raise ScenarioError(f"unknown init topology {cfg.init_topology!r}")
    rng = random.Random(cfg.seed)
    geometry = Geometry(cfg.dim)
    if coords is None:
        if cfg.placement == MIN_DIST:
            coords = _place_min_dist(cfg, rng)
        else:
            coords = _place_uniform(cfg, rng)
    else:
        if len(coords) != cfg.n:
            raise ScenarioError("explicit node list does not match n")
        if len({c.axes for c in coords}) != len(coords):
            raise ScenarioError("explicit node list has duplicate coordinates")
    nodes = _init_topology(cfg, rng, coords)
    state = SystemState(geometry, cfg.bits, nodes)
    _inject_inflight(cfg, rng, state, coords)
    if not weakly_connected(state):
        raise AssertionError("generator produced a disconnected initial graph")
    return state


# --- execution ---------------------------------------------------------------


def _apply_effects(state: SystemState, coord: Coord, effects: protocol.Effects,
                   parent: int | None, source_search: protocol.Search | None,
                   recorder, monitors):
    state.nodes[coord] = effects.state
    for dst, message in effects.outbound:
        state.enqueue(dst, message, parent=parent)
    if effects.terminal is not None:
        term = effects.terminal
        recorder.record(TraceEvent(state.step_counter, "SEARCH_END", coord,
                                   {"request_id": term.request_id,
                                    "result": coord_to_json(term.result),
                                    "hops": term.hops}))
        monitors.on_search_end(source_search, term, state.step_counter,
                               state.round_counter)


def _fire_timeout(state: SystemState, coord: Coord, recorder, monitors):
    geo = state.geometry
    effects = protocol.handle_list_timeout(geo, state.nodes[coord])
    _apply_effects(state, coord, effects, None, None, recorder, monitors)
    effects = protocol.handle_quad_timeout(geo, state.nodes[coord])
    _apply_effects(state, coord, effects, None, None, recorder, monitors)
    recorder.record(TraceEvent(state.step_counter, "TIMEOUT", coord, {}))
    monitors.after_action(coord, state.nodes[coord])
    state.step_counter += 1


def _message_summary(message: protocol.Message) -> dict:
    summary = {"type": type(message).__name__.lower()}
    if isinstance(message, (protocol.Search, protocol.SearchResult)):
        summary["request_id"] = message.request_id
    return summary


def _deliver(state: SystemState, dst: Coord, env: Envelope, recorder, monitors):
    geo = state.geometry
    state.mailboxes[dst].remove(env)
    state.delivered_total += 1
    message = env.message
    node = state.nodes[dst]
    search = None
    if isinstance(message, protocol.Linearize):
        effects = protocol.handle_linearize(geo, node, message.w)
    elif isinstance(message, protocol.QLinearize):
        effects = protocol.handle_qlinearize(geo, node, message.w, message.area)
    elif isinstance(message, protocol.Search):
        search = message
        effects = protocol.handle_search(geo, node, message)
    elif isinstance(message, protocol.SearchResult):
        effects = protocol.Effects(node)  # absorbed; the answer has arrived
    else:
        raise TypeError(f"unknown message {message!r}")
    _apply_effects(state, dst, effects, env.seq, search, recorder, monitors)
    recorder.record(TraceEvent(state.step_counter, "DELIVER", dst,
                               {"seq": env.seq, **_message_summary(message)}))
    monitors.after_action(dst, state.nodes[dst])
    state.step_counter += 1


def step(state: SystemState, rng: random.Random,
         recorder=NULL_RECORDER, monitors=NULL_MONITORS) -> TraceEvent | None:
    """Execute exactly one enabled action chosen by the rng: one node's
    timeout or the delivery of one mailbox message."""
    coords = state.coords_sorted()
    deliverable = [(dst, env) for dst in coords for env in state.mailboxes[dst]]
    pick = rng.randrange(len(coords) + len(deliverable))
    if pick < len(coords):
        _fire_timeout(state, coords[pick], recorder, monitors)
    else:
        dst, env = deliverable[pick - len(coords)]
        _deliver(state, dst, env, recorder, monitors)
    return None


class SearchWorkload:
    """Seeded search injection: random initiators; targets alternate between
    existing node positions and arbitrary grid points (empty leaves included)."""

    def __init__(self, searches_per_round: int):
        self.searches_per_round = searches_per_round

    def inject(self, state: SystemState, rng: random.Random, recorder, monitors):
        coords = state.coords_sorted()
        top = 1 << state.bits
        for _ in range(self.searches_per_round):
            initiator = coords[rng.randrange(len(coords))]
            if rng.random() < 0.5:
                target = coords[rng.randrange(len(coords))].point()
            else:
                target = Point(state.bits,
                               tuple(rng.randrange(top)
                                     for _ in range(state.geometry.dim)))
            request_id = state.next_request_id
            state.next_request_id += 1
            message = protocol.Search(initiator, target, request_id, 0, (initiator,))
            state.enqueue(initiator, message)
            recorder.record(TraceEvent(state.step_counter, "SEARCH_START", initiator,
                                       {"request_id": request_id,
                                        "target": point_to_json(target)}))
            monitors.on_search_start(request_id, initiator, target,
                                     state.step_counter, state.round_counter)


def run_round(state: SystemState, schedule: ScheduleConfig, rng: random.Random,
              recorder=NULL_RECORDER, monitors=NULL_MONITORS,
              workload: SearchWorkload | None = None):
    """One fairness round: inject searches, fire every node's timeout once in
    seeded order, and deliver mailbox messages per the delivery policy.

    Every message present at round start is delivered within ``delta`` rounds
    of its enqueue round; the policy only chooses which eligible messages to
    delay and in which order the rest land.
    """
    this_round = state.round_counter
    if workload is not None:
        workload.inject(state, rng, recorder, monitors)

    coords = state.coords_sorted()
    eligible = [(dst, env) for dst in coords for env in state.mailboxes[dst]]
    policy = schedule.delivery_policy
    if policy == LIFO:
        chosen = sorted(eligible, key=lambda de: -de[1].seq)
    elif policy == OLDEST_LAST:
        forced = [de for de in eligible
                  if this_round - de[1].enqueue_round >= schedule.delta]
        chosen = sorted(forced, key=lambda de: -de[1].seq)
    elif policy == RANDOM:
        chosen = [de for de in eligible
                  if this_round - de[1].enqueue_round >= schedule.delta
                  or rng.random() < 0.5]
        rng.shuffle(chosen)
    else:
        raise ValueError(f"unknown delivery policy {policy!r}")

    timeout_order = coords[:]
    rng.shuffle(timeout_order)
    slots = ["t"] * len(timeout_order) + ["d"] * len(chosen)
    rng.shuffle(slots)
    timeouts = iter(timeout_order)
    deliveries = iter(chosen)
    for slot in slots:
        if slot == "t":
            _fire_timeout(state, next(timeouts), recorder, monitors)
        else:
            dst, env = next(deliveries)
            _deliver(state, dst, env, recorder, monitors)

    for box in state.mailboxes.values():
        for env in box:
            age = this_round - env.enqueue_round
            if age >= schedule.delta:
                raise AssertionError(
                    f"message seq={env.seq} exceeded the fairness bound "
                    f"(age {age} >= delta {schedule.delta})")
    state.round_counter += 1


def run_until(state: SystemState, schedule: ScheduleConfig, stop,
              rng: random.Random | None = None, recorder=NULL_RECORDER,
              monitors=NULL_MONITORS, workload: SearchWorkload | None = None,
              max_rounds: int | None = None) -> tuple[int, bool]:
    """Iterate rounds until ``stop(state)`` or the round budget runs out.

    Returns (round_reached, converged); a spent budget is an outcome, not
    an error.
    """
    if rng is None:
        rng = random.Random(schedule.seed)
    limit = max_rounds
    if limit is None:
        limit = schedule.max_rounds
    if limit is None:
        limit = 200 * len(state.nodes)
    while True:
        if stop(state):
            return state.round_counter, True
        if state.round_counter >= limit:
            return state.round_counter, False
        run_round(state, schedule, rng, recorder, monitors, workload)


# --- exports -----------------------------------------------------------------


def export_trace(events: list[TraceEvent]) -> bytes:
    lines = [json.dumps({"schema": TRACE_SCHEMA}, sort_keys=True, separators=(",", ":"))]
    lines += [json.dumps(_event_json(e), sort_keys=True, separators=(",", ":"))
              for e in events]
    return ("\n".join(lines) + "\n").encode()


def export_snapshot(state: SystemState) -> bytes:
    obj = {
        "schema": SNAPSHOT_SCHEMA,
        "dimension": state.geometry.dim,
        "bits": state.bits,
        "convention": list(state.geometry.convention.smaller_first),
        "step": state.step_counter,
        "round": state.round_counter,
        "next_seq": state.next_seq,
        "next_request_id": state.next_request_id,
        "nodes": [protocol.node_state_to_json(state.nodes[c], state.geometry.key)
                  for c in state.coords_sorted()],
        "mailboxes": [
            {
                "owner": coord_to_json(c),
                "messages": [
                    {"seq": env.seq, "enqueue_round": env.enqueue_round,
                     "parent": env.parent,
                     "message": protocol.message_to_json(env.message)}
                    for env in state.mailboxes[c]
                ],
            }
            for c in state.coords_sorted()
        ],
    }
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode()


def import_snapshot(data: bytes) -> SystemState:
    obj = json.loads(data.decode())
    if obj.get("schema") != SNAPSHOT_SCHEMA:
        raise ValueError(f"not a snapshot: schema {obj.get('schema')!r}")
    geometry = Geometry(obj["dimension"],
                        Convention(tuple(obj["convention"])))
    nodes = {}
    for entry in obj["nodes"]:
        ns = protocol.node_state_from_json(entry)
        nodes[ns.coord] = ns
    state = SystemState(geometry, obj["bits"], nodes)
    for boxentry in obj["mailboxes"]:
        owner = coord_from_json(boxentry["owner"])
        for m in boxentry["messages"]:
            env = Envelope(m["seq"], protocol.message_from_json(m["message"], geometry),
                           m["enqueue_round"], m["parent"])
            state.mailboxes[owner].append(env)
    state.step_counter = obj["step"]
    state.round_counter = obj["round"]
    state.next_seq = obj["next_seq"]
    state.next_request_id = obj["next_request_id"]
    return state


def export_dot(state: SystemState) -> bytes:
    """Explicit edges of the current state; list and quad edges are
    distinguished by attribute and color."""
    coords = state.coords_sorted()
    names = {c: f"n{i}" for i, c in enumerate(coords)}
    lines = ["digraph quadnet {"]
    for c in coords:
        lines.append(f'  {names[c]} [label="{c}"];')
    for c in coords:
        ns = state.nodes[c]
        for other in (ns.left, ns.right):
            if other is not None:
                lines.append(f'  {names[c]} -> {names[other]} '
                             f'[kind="list", color="blue"];')
        for q in sorted(ns.quad, key=state.geometry.key):
            lines.append(f'  {names[c]} -> {names[q]} [kind="quad", color="red"];')
    lines.append("}")
    return ("\n".join(lines) + "\n").encode()
