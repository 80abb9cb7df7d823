"""Per-node state machine: list repair, quad-edge growth, and search routing.

Every handler is a pure transition function from (state, input) to Effects;
the simulator owns delivery and applies the effects atomically.  Handlers
never invent coordinates: they only compare, store, and forward what they
were given.
"""

from __future__ import annotations

from dataclasses import dataclass

from .space import (
    Coord,
    Geometry,
    Point,
    Region,
    contains,
    coord_from_json,
    coord_to_json,
    point_from_json,
    point_to_json,
)


@dataclass(frozen=True)
class NodeState:
    """One peer's protocol variables.

    ``quad`` holds at most one member per covering subarea once sanitized;
    the raw round-robin counters are reduced modulo the current candidate
    count at use time.
    """

    coord: Coord
    left: Coord | None = None
    right: Coord | None = None
    quad: frozenset[Coord] = frozenset()
    rr_q: int = 0
    rr_area: int = 0


@dataclass(frozen=True)
class Linearize:
    w: Coord


@dataclass(frozen=True)
class QLinearize:
    w: Coord
    area: Region | None


@dataclass(frozen=True)
class Search:
    initiator: Coord
    target: Point
    request_id: int
    hops: int
    trail: tuple[Coord, ...]
    # invariant: hops == len(trail) - 1 and trail[-1] is the processing node


@dataclass(frozen=True)
class SearchResult:
    request_id: int
    result: Coord


Message = Linearize | QLinearize | Search | SearchResult


@dataclass(frozen=True)
class Termination:
    """A search that ended at this node."""

    request_id: int
    result: Coord
    hops: int


@dataclass(frozen=True)
class Effects:
    state: NodeState
    outbound: tuple[tuple[Coord, Message], ...] = ()
    terminal: Termination | None = None


class _Machine:
    """Mutable working copy of one node for the duration of a single action."""

    def __init__(self, geo: Geometry, state: NodeState):
        self.geo = geo
        self.coord = state.coord
        self.left = state.left
        self.right = state.right
        self.quad = set(state.quad)
        self.rr_q = state.rr_q
        self.rr_area = state.rr_area
        self.outbound: list[tuple[Coord, Message]] = []
        self.terminal: Termination | None = None

    def effects(self) -> Effects:
        return Effects(
            NodeState(self.coord, self.left, self.right, frozenset(self.quad),
                      self.rr_q, self.rr_area),
            tuple(self.outbound),
            self.terminal,
        )

    def send(self, dst: Coord, message: Message):
        self.outbound.append((dst, message))

    def regions(self):
        return self.geo.compute_regions(self.coord, self.left, self.right)

    def quad_sorted(self) -> list[Coord]:
        return sorted(self.quad, key=self.geo.key)

    # -- consistency checks ------------------------------------------------

    def sanitize_list(self):
        """Clear neighbors on the wrong side, feeding them back locally."""
        me = self.coord
        removed = []
        if self.left is not None:
            if self.left == me:
                self.left = None
            elif not self.geo.precedes(self.left, me):
                removed.append(self.left)
                self.left = None
        if self.right is not None:
            if self.right == me:
                self.right = None
            elif not self.geo.precedes(me, self.right):
                removed.append(self.right)
                self.right = None
        for w in removed:
            self.linearize(w)

    def sanitize_quad(self):
        """Keep one member per covering subarea, delegating the rest.

        Members that fall inside the node's own subarea are unusable for
        routing and are delegated as well; a stored self-reference is dropped
        silently.
        """
        self.sanitize_list()
        if not self.quad:
            return
        _, targets = self.regions()
        covered: dict[Region, Coord] = {}
        dropped: list[Coord] = []
        for w in self.quad_sorted():
            if w == self.coord:
                continue
            region = next((t for t in targets if contains(t, w)), None)
            if region is None or region in covered:
                dropped.append(w)
            else:
                covered[region] = w
        self.quad = set(covered.values())
        for w in dropped:
            self.linearize(w)

    # -- list machinery ------------------------------------------------------

    def linearize(self, w: Coord):
        """Adopt w if it is a closer neighbor, otherwise pass it onward.

        Assumes the list variables are already consistent.  Whatever value a
        case displaces is sent along, so no reference is ever lost.
        """
        me = self.coord
        if w == me:
            return
        if self.geo.precedes(w, me):
            if self.left is None:
                self.left = w
            elif w == self.left:
                pass
            elif self.geo.precedes(self.left, w):
                old, self.left = self.left, w
                self.send(w, Linearize(old))
            else:
                self.send(self.left, Linearize(w))
        else:
            if self.right is None:
                self.right = w
            elif w == self.right:
                pass
            elif self.geo.precedes(w, self.right):
                old, self.right = self.right, w
                self.send(w, Linearize(old))
            else:
                self.send(self.right, Linearize(w))

    # -- quad machinery ------------------------------------------------------

    def delegate_round_robin_member(self):
        if not self.quad:
            return
        members = self.quad_sorted()
        w = members[self.rr_q % len(members)]
        self.rr_q += 1
        self.linearize(w)

    def choose_uncovered_area(self) -> Region | None:
        _, targets = self.regions()
        uncovered = [t for t in targets
                     if not any(contains(t, w) for w in self.quad)]
        if not uncovered:
            return None
        area = uncovered[self.rr_area % len(uncovered)]
        self.rr_area += 1
        return area

    def finish_search(self, msg: Search):
        self.terminal = Termination(msg.request_id, self.coord, msg.hops)
        self.send(msg.initiator, SearchResult(msg.request_id, self.coord))


# --- handlers --------------------------------------------------------------


def sanitize_list(geo: Geometry, state: NodeState) -> Effects:
    m = _Machine(geo, state)
    m.sanitize_list()
    return m.effects()


def sanitize_quad(geo: Geometry, state: NodeState) -> Effects:
    m = _Machine(geo, state)
    m.sanitize_quad()
    return m.effects()


def handle_list_timeout(geo: Geometry, state: NodeState) -> Effects:
    """Periodic introduction to both list neighbors."""
    m = _Machine(geo, state)
    m.sanitize_list()
    for neighbor in (m.left, m.right):
        if neighbor is not None:
            m.send(neighbor, Linearize(m.coord))
    return m.effects()


def handle_linearize(geo: Geometry, state: NodeState, w: Coord) -> Effects:
    m = _Machine(geo, state)
    m.sanitize_list()
    m.linearize(w)
    return m.effects()


def handle_quad_timeout(geo: Geometry, state: NodeState) -> Effects:
    """Periodic quad maintenance: recycle one member through the list flow,
    then ask both neighbors about one still-uncovered subarea."""
    m = _Machine(geo, state)
    m.sanitize_quad()
    m.delegate_round_robin_member()
    area = m.choose_uncovered_area()
    for neighbor in (m.left, m.right):
        if neighbor is not None:
            m.send(neighbor, QLinearize(m.coord, area))
    return m.effects()


def handle_qlinearize(geo: Geometry, state: NodeState, w: Coord,
                      area: Region | None) -> Effects:
    """Absorb an introduction: maybe adopt w as a new quad edge, and answer
    the sender's subarea query with a known inhabitant (possibly self)."""
    m = _Machine(geo, state)
    m.sanitize_quad()
    m.linearize(w)
    _, targets = m.regions()
    if w != m.coord:
        region = next((t for t in targets if contains(t, w)), None)
        if region is not None and not any(contains(region, q) for q in m.quad):
            m.quad.add(w)
    if area is not None:
        candidates = sorted((c for c in {m.coord, *m.quad} if contains(area, c)),
                            key=geo.key)
        if candidates:
            m.send(w, QLinearize(candidates[0], None))
    return m.effects()


def handle_search(geo: Geometry, state: NodeState, msg: Search) -> Effects:
    """Route toward the target's subarea via quad edges, or terminate here."""
    m = _Machine(geo, state)
    m.sanitize_quad()
    own, targets = m.regions()
    if contains(own, msg.target):
        m.finish_search(msg)
        return m.effects()
    region = next((t for t in targets if contains(t, msg.target)), None)
    if region is None:
        raise ValueError(f"target {msg.target} outside the unit cube")
    member = next((q for q in m.quad_sorted() if contains(region, q)), None)
    if member is None:
        m.finish_search(msg)
    else:
        m.send(member, Search(msg.initiator, msg.target, msg.request_id,
                              msg.hops + 1, msg.trail + (member,)))
    return m.effects()


def message_coords(message: Message) -> tuple[Coord, ...]:
    """Every node reference the payload carries (for implicit-edge tracking)."""
    if isinstance(message, Linearize):
        return (message.w,)
    if isinstance(message, QLinearize):
        return (message.w,)
    if isinstance(message, Search):
        return (message.initiator,) + message.trail
    if isinstance(message, SearchResult):
        return (message.result,)
    raise TypeError(f"unknown message {message!r}")


# --- wire forms --------------------------------------------------------------


def node_state_to_json(state: NodeState, sort_key=None) -> dict:
    quad = sorted(state.quad, key=sort_key) if sort_key else sorted(
        state.quad, key=lambda c: c.axes)
    return {
        "coord": coord_to_json(state.coord),
        "left": None if state.left is None else coord_to_json(state.left),
        "right": None if state.right is None else coord_to_json(state.right),
        "quad": [coord_to_json(q) for q in quad],
        "rr_q": state.rr_q,
        "rr_area": state.rr_area,
    }


def node_state_from_json(obj: dict) -> NodeState:
    return NodeState(
        coord_from_json(obj["coord"]),
        None if obj["left"] is None else coord_from_json(obj["left"]),
        None if obj["right"] is None else coord_from_json(obj["right"]),
        frozenset(coord_from_json(q) for q in obj["quad"]),
        obj.get("rr_q", 0), obj.get("rr_area", 0))


def message_to_json(message: Message) -> dict:
    if isinstance(message, Linearize):
        return {"type": "linearize", "w": coord_to_json(message.w)}
    if isinstance(message, QLinearize):
        return {"type": "qlinearize", "w": coord_to_json(message.w),
                "area": None if message.area is None else message.area.path_string()}
    if isinstance(message, Search):
        return {"type": "search", "initiator": coord_to_json(message.initiator),
                "target": point_to_json(message.target),
                "request_id": message.request_id, "hops": message.hops,
                "trail": [coord_to_json(c) for c in message.trail]}
    if isinstance(message, SearchResult):
        return {"type": "search_result", "request_id": message.request_id,
                "result": coord_to_json(message.result)}
    raise TypeError(f"unknown message {message!r}")


def message_from_json(obj: dict, geo: Geometry) -> Message:
    kind = obj["type"]
    if kind == "linearize":
        return Linearize(coord_from_json(obj["w"]))
    if kind == "qlinearize":
        area = obj["area"]
        return QLinearize(coord_from_json(obj["w"]),
                          None if area is None else geo.region_from_path(area))
    if kind == "search":
        return Search(coord_from_json(obj["initiator"]),
                      point_from_json(obj["target"]),
                      obj["request_id"], obj["hops"],
                      tuple(coord_from_json(c) for c in obj["trail"]))
    if kind == "search_result":
        return SearchResult(obj["request_id"], coord_from_json(obj["result"]))
    raise ValueError(f"unknown message type {kind!r}")
