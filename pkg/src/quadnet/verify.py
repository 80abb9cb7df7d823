"""Global oracles and online monitors.

The oracle side knows every node and judges the system from outside: the
full division tree, the total order, which subareas are inhabited, and what
a search must answer once the overlay has settled.  The monitors turn those
facts into per-round and per-search checks that a conforming run never
trips.
"""

from __future__ import annotations

from bisect import bisect_left
from collections import defaultdict
from dataclasses import dataclass, field

from . import sim
from .protocol import NodeState, Search, Termination
from .space import (
    Convention,
    Coord,
    DivisionTree,
    Geometry,
    Point,
    Region,
    contains,
    quad_division,
    unit_region,
)

LEGITIMACY = "LEGITIMACY"
CLOSURE = "CLOSURE"
MONOTONIC_GEO = "MONOTONIC_GEO"
MONOTONIC_STD = "MONOTONIC_STD"
Q_MONOTONE = "Q_MONOTONE"
CONNECTIVITY = "CONNECTIVITY"
HOP_BOUND = "HOP_BOUND"
DISTANCE_BOUND = "DISTANCE_BOUND"

VIOLATION_KINDS = (LEGITIMACY, CLOSURE, MONOTONIC_GEO, MONOTONIC_STD,
                   Q_MONOTONE, CONNECTIVITY, HOP_BOUND, DISTANCE_BOUND)


@dataclass(frozen=True)
class Violation:
    kind: str
    round: int
    details: str

    def to_json(self) -> dict:
        return {"kind": self.kind, "round": self.round, "details": self.details}


def global_tree(coords, convention: Convention | None = None) -> DivisionTree:
    """The division tree over the entire node set."""
    coords = list(coords)
    if not coords:
        raise ValueError("need at least one node")
    return quad_division(coords, unit_region(coords[0].dim, convention))


def global_order(coords, convention: Convention | None = None) -> list[Coord]:
    return global_tree(coords, convention).ordered_points()


def oracle_search_answer(coords, target: Point,
                         convention: Convention | None = None) -> Coord | None:
    """The inhabitant of the target's leaf in the global tree, if any."""
    return global_tree(coords, convention).locate(target).point


class GlobalOracle:
    """Static per-run facts derived from the full node set.

    Region emptiness queries exploit that a region's path is exactly a prefix
    of the interleaved keys of the points inside it, so inhabitants live in a
    contiguous slice of the key-sorted node list.
    """

    def __init__(self, coords, geometry: Geometry):
        self.geometry = geometry
        self.tree = global_tree(coords, geometry.convention)
        self.order = self.tree.ordered_points()
        if len(self.order) != len(list(coords)):
            raise AssertionError("tree lost points")
        self.bits = self.order[0].bits
        self.keys = [geometry.key(c) for c in self.order]
        if any(a >= b for a, b in zip(self.keys, self.keys[1:])):
            raise AssertionError("traversal order disagrees with key order")
        self.neighbors: dict[Coord, tuple[Coord | None, Coord | None]] = {}
        for i, c in enumerate(self.order):
            left = self.order[i - 1] if i > 0 else None
            right = self.order[i + 1] if i + 1 < len(self.order) else None
            self.neighbors[c] = (left, right)
        self._answers: dict[Point, Coord | None] = {}
        self.coord_by_axes = {c.axes: c for c in self.order}

    def _key_range(self, region: Region) -> tuple[int, int]:
        width = self.geometry.dim * self.bits
        depth = region.depth
        if depth > width:
            raise ValueError("region finer than the coordinate grid")
        prefix = 0
        for b in region.path:
            prefix = (prefix << 1) | b
        lo = prefix << (width - depth)
        return lo, lo + (1 << (width - depth))

    def count_in_region(self, region: Region) -> int:
        lo, hi = self._key_range(region)
        return bisect_left(self.keys, hi) - bisect_left(self.keys, lo)

    def first_inhabitant(self, region: Region) -> Coord | None:
        lo, hi = self._key_range(region)
        i = bisect_left(self.keys, lo)
        if i < len(self.keys) and self.keys[i] < hi:
            return self.order[i]
        return None

    def search_answer(self, target: Point) -> Coord | None:
        if target not in self._answers:
            self._answers[target] = self.tree.locate(target).point
        return self._answers[target]

    def node_for_point(self, target: Point) -> Coord | None:
        if target.bits != self.bits:
            return None
        return self.coord_by_axes.get(target.axes)


def is_legitimate(state, oracle: GlobalOracle | None = None) -> tuple[bool, list[Violation]]:
    """Every node linked to its true order neighbors, and exactly one quad
    member inside each inhabited covering subarea."""
    if oracle is None:
        oracle = GlobalOracle(list(state.nodes), state.geometry)
    geometry = state.geometry
    rnd = state.round_counter
    violations: list[Violation] = []
    for c in state.coords_sorted():
        ns = state.nodes[c]
        expect_left, expect_right = oracle.neighbors[c]
        if ns.left != expect_left or ns.right != expect_right:
            violations.append(Violation(
                LEGITIMACY, rnd,
                f"node {c}: neighbors {ns.left}/{ns.right} "
                f"!= closest {expect_left}/{expect_right}"))
            continue
        own, targets = geometry.compute_regions(c, expect_left, expect_right)
        member_by_region: dict[Region, Coord] = {}
        for w in sorted(ns.quad, key=geometry.key):
            if w == c or contains(own, w):
                violations.append(Violation(
                    LEGITIMACY, rnd, f"node {c}: quad member {w} inside own subarea"))
                continue
            region = next((t for t in targets if contains(t, w)), None)
            if region is None:
                violations.append(Violation(
                    LEGITIMACY, rnd, f"node {c}: quad member {w} outside all subareas"))
            elif region in member_by_region:
                violations.append(Violation(
                    LEGITIMACY, rnd,
                    f"node {c}: two quad members in subarea {region.path_string()}"))
            else:
                member_by_region[region] = w
        for region in targets:
            if region not in member_by_region and oracle.count_in_region(region) > 0:
                violations.append(Violation(
                    LEGITIMACY, rnd,
                    f"node {c}: inhabited subarea {region.path_string()} uncovered"))
    return not violations, violations


def build_legitimate_nodes(coords, geometry: Geometry | None = None,
                           oracle: GlobalOracle | None = None) -> dict[Coord, NodeState]:
    """Construct a legitimate state directly from the global tree: list
    neighbors from the order, one quad edge (the order-smallest inhabitant)
    per inhabited covering subarea."""
    coords = list(coords)
    geometry = geometry or Geometry(coords[0].dim)
    oracle = oracle or GlobalOracle(coords, geometry)
    nodes: dict[Coord, NodeState] = {}
    for c in oracle.order:
        left, right = oracle.neighbors[c]
        _, targets = geometry.compute_regions(c, left, right)
        quad = set()
        for region in targets:
            w = oracle.first_inhabitant(region)
            if w is not None:
                quad.add(w)
        nodes[c] = NodeState(c, left, right, frozenset(quad))
    return nodes


@dataclass
class SearchRecord:
    request_id: int
    initiator: Coord
    target: Point
    start_step: int
    start_round: int
    end_step: int | None = None
    end_round: int | None = None
    result: Coord | None = None
    hops: int | None = None
    trail: tuple[Coord, ...] | None = None


class SearchLedger:
    """Append-only search bookkeeping per (initiator, target) key."""

    def __init__(self):
        self.pending: dict[int, SearchRecord] = {}
        self.by_key: dict[tuple[Coord, Point], list[SearchRecord]] = defaultdict(list)
        self.started = 0
        self.finished = 0

    def start(self, request_id: int, initiator: Coord, target: Point,
              step: int, round_: int):
        self.pending[request_id] = SearchRecord(request_id, initiator, target,
                                                step, round_)
        self.started += 1

    def finish(self, request_id: int, result: Coord, hops: int,
               trail: tuple[Coord, ...], step: int, round_: int) -> SearchRecord:
        record = self.pending.pop(request_id)
        record.end_step = step
        record.end_round = round_
        record.result = result
        record.hops = hops
        record.trail = trail
        self.by_key[(record.initiator, record.target)].append(record)
        self.finished += 1
        return record


class RunMonitors:
    """Online checks attached to one simulation run.

    Wire into the simulator loop: the scheduler invokes the search and
    per-action callbacks, the run harness invokes ``check_initial`` once and
    ``on_round_end`` after every round.
    """

    def __init__(self, state: sim.SystemState, *, check_distance: bool | None = None,
                 check_hop_bound: bool = False, max_violation_samples: int = 20):
        self.geometry = state.geometry
        self.bits = state.bits
        self.n = len(state.nodes)
        self.oracle = GlobalOracle(list(state.nodes), self.geometry)
        self.ledger = SearchLedger()
        self.violations: list[Violation] = []
        self.counts: dict[str, int] = {k: 0 for k in VIOLATION_KINDS}
        self.max_violation_samples = max_violation_samples
        self.converged_round: int | None = None
        self.closure_baseline: dict[Coord, tuple] | None = None
        self._q_last: dict[Coord, tuple] = {}
        self._geo_lock: dict[tuple, tuple[int, Coord]] = {}
        self._std_lock: dict[tuple, tuple[int, Coord]] = {}
        self.check_distance = (self.geometry.dim == 2) if check_distance is None \
            else check_distance
        self.check_hop_bound = check_hop_bound
        self.hop_limit = 4 * max(self.n - 1, 0).bit_length() + 2
        self.max_hops = 0

    # -- bookkeeping ---------------------------------------------------------

    def _flag(self, kind: str, round_: int, details: str):
        self.counts[kind] += 1
        if len(self.violations) < self.max_violation_samples:
            self.violations.append(Violation(kind, round_, details))

    @property
    def total_violations(self) -> int:
        return sum(self.counts.values())

    # -- scheduler callbacks ---------------------------------------------------

    def on_search_start(self, request_id: int, initiator: Coord, target: Point,
                        step: int, round_: int):
        self.ledger.start(request_id, initiator, target, step, round_)

    def on_search_end(self, search: Search, termination: Termination,
                      step: int, round_: int):
        record = self.ledger.finish(termination.request_id, termination.result,
                                    termination.hops, search.trail, step, round_)
        key = (record.initiator, record.target)
        result = record.result
        self.max_hops = max(self.max_hops, record.hops)

        answer = self.oracle.search_answer(record.target)
        if answer is not None:
            lock = self._geo_lock.get(key)
            if lock is not None and record.start_step > lock[0] and result != lock[1]:
                self._flag(MONOTONIC_GEO, round_,
                           f"key {key[0]}->{key[1]}: returned {result} after "
                           f"the settled answer {lock[1]} was already returned")
            if lock is None and result == answer:
                self._geo_lock[key] = (step, result)

        target_node = self.oracle.node_for_point(record.target)
        if target_node is not None:
            lock = self._std_lock.get(key)
            if lock is not None and record.start_step > lock[0] and result != target_node:
                self._flag(MONOTONIC_STD, round_,
                           f"key {key[0]}->{key[1]}: returned {result} after "
                           f"the target node itself was already returned")
            if lock is None and result == target_node:
                self._std_lock[key] = (step, result)

        if self.check_distance:
            self._check_trail_distance(record, round_)
        if self.check_hop_bound and record.hops > self.hop_limit:
            self._flag(HOP_BOUND, round_,
                       f"search {record.request_id} took {record.hops} hops "
                       f"(limit {self.hop_limit} for n={self.n})")

    def _check_trail_distance(self, record: SearchRecord, round_: int):
        # After every even number of hops k the routed message sits within
        # 1/2^((k-1)/2) of the target: dist^2 * 2^k <= 2^(2*bits+1), exactly.
        target = record.target
        if target.bits != self.bits:
            raise ValueError("target precision differs from the scenario grid")
        bound = 1 << (2 * self.bits + 1)
        for k in range(0, record.hops + 1, 2):
            node = record.trail[k]
            d2 = sum((a - t) * (a - t) for a, t in zip(node.axes, target.axes))
            if (d2 << k) > bound:
                self._flag(DISTANCE_BOUND, round_,
                           f"search {record.request_id}: at hop {k} node {node} "
                           f"is too far from target {target}")

    def after_action(self, coord: Coord, ns: NodeState):
        """Covering-subarea monotonicity, snapshotted right after the node's
        own consistency checks ran."""
        previous = self._q_last.get(coord)
        lr = (ns.left, ns.right)
        if previous is not None and previous[0] == lr:
            return
        _, targets = self.geometry.compute_regions(coord, ns.left, ns.right)
        regions = frozenset(t.path for t in targets)
        if previous is not None and not previous[1] <= regions:
            lost = {"".join("LR"[b] for b in p) for p in previous[1] - regions}
            self._flag(Q_MONOTONE, -1,
                       f"node {coord}: covering subareas shrank, lost {sorted(lost)}")
        self._q_last[coord] = (lr, regions)

    # -- round hooks -----------------------------------------------------------

    def check_initial(self, state: sim.SystemState):
        if not sim.weakly_connected(state):
            self._flag(CONNECTIVITY, state.round_counter,
                       "initial explicit+implicit graph is not weakly connected")
        self._check_legitimacy(state)

    def on_round_end(self, state: sim.SystemState):
        if not sim.weakly_connected(state):
            self._flag(CONNECTIVITY, state.round_counter,
                       "explicit+implicit graph is not weakly connected")
        if self.closure_baseline is not None:
            self._check_closure(state)
        elif self.converged_round is None:
            self._check_legitimacy(state)

    def _check_legitimacy(self, state: sim.SystemState):
        legit, _ = is_legitimate(state, self.oracle)
        if legit and self.converged_round is None:
            self.converged_round = state.round_counter

    def activate_closure(self, state: sim.SystemState):
        self.closure_baseline = {c: (ns.left, ns.right, ns.quad)
                                 for c, ns in state.nodes.items()}

    def _check_closure(self, state: sim.SystemState):
        for c, baseline in self.closure_baseline.items():
            ns = state.nodes[c]
            if (ns.left, ns.right, ns.quad) != baseline:
                self._flag(CLOSURE, state.round_counter,
                           f"node {c}: explicit edges changed after convergence")
