"""Exact geometry of recursive axis cuts on the unit d-cube.

Positions are dyadic fixed-point values, so midpoint comparisons are exact
integer arithmetic.  Node coordinates additionally carry odd numerators,
which keeps every node strictly inside its half-open cell at every cut the
subdivision can reach.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterable, Iterator

LEFT = 0
RIGHT = 1

LESS = -1
GREATER = 1

MAX_BITS = 62


class SpaceError(Exception):
    """Base class for geometry faults."""


class PrecisionExceeded(SpaceError):
    """A split was requested below the fixed-point resolution of the inputs."""


class DuplicateCoordinate(SpaceError):
    """Two supposedly distinct positions are identical."""


class OrderingViolation(SpaceError):
    """Neighbor arguments do not straddle the node as required."""


class Point:
    """Position in the unit cube; axis i has value ``axes[i] / 2**bits``.

    Value-semantic and hash-cached: these objects key every hot dictionary in
    the simulator.
    """

    __slots__ = ("bits", "axes", "_hash")

    def __init__(self, bits: int, axes):
        axes = tuple(axes)
        if not 1 <= bits <= MAX_BITS:
            raise ValueError(f"bits must be in [1, {MAX_BITS}], got {bits}")
        if len(axes) < 2:
            raise ValueError("at least two axes required")
        top = 1 << bits
        for a in axes:
            if not 0 <= a < top:
                raise ValueError(f"axis value {a} outside [0, 2^{bits})")
        self.bits = bits
        self.axes = axes
        self._hash = hash((type(self).__name__, bits, axes))

    @property
    def dim(self) -> int:
        return len(self.axes)

    def values(self) -> tuple[float, ...]:
        """Float view for display only; all logic stays on the integers."""
        scale = float(1 << self.bits)
        return tuple(a / scale for a in self.axes)

    def __eq__(self, other):
        return (type(other) is type(self) and self.bits == other.bits
                and self.axes == other.axes)

    def __hash__(self):
        return self._hash

    def __str__(self):
        return "(" + ", ".join(f"{v:.6g}" for v in self.values()) + ")"

    def __repr__(self):
        return f"{type(self).__name__}(bits={self.bits}, axes={self.axes})"


class Coord(Point):
    """A node's unique position, doubling as its identity.

    Odd numerators mean the coordinate can never equal the (even) midpoint of
    any interval wider than two grid units, so containment never wavers as
    cells are halved.
    """

    __slots__ = ()

    def __init__(self, bits: int, axes):
        super().__init__(bits, axes)
        for a in self.axes:
            if a % 2 == 0:
                raise ValueError(f"coordinate numerators must be odd, got {a}")

    def point(self) -> Point:
        return Point(self.bits, self.axes)


class Convention:
    """Which half of a cut becomes the left child, per axis.

    ``smaller_first[i]`` means the half with the smaller i-th coordinate is
    the left child when axis i is cut.
    """

    __slots__ = ("smaller_first", "_hash")

    def __init__(self, smaller_first):
        self.smaller_first = tuple(bool(b) for b in smaller_first)
        if len(self.smaller_first) < 2:
            raise ValueError("at least two axes required")
        self._hash = hash(self.smaller_first)

    def __eq__(self, other):
        return (isinstance(other, Convention)
                and self.smaller_first == other.smaller_first)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Convention({self.smaller_first})"

    @staticmethod
    def default(dim: int) -> "Convention":
        # Planar default: west is left on x, north is left on y (y grows north).
        if dim == 2:
            return Convention((True, False))
        return Convention((True,) * dim)


class Region:
    """Subarea reached from the unit cube by a path of child choices.

    ``cells[i] = (prefix, cuts)`` means axis i spans the half-open dyadic
    interval [prefix/2^cuts, (prefix+1)/2^cuts).  The cells are derived from
    the path, so equality and hashing ignore the convention object.
    """

    __slots__ = ("path", "cells", "convention", "_hash")

    def __init__(self, path, cells, convention: Convention):
        self.path = tuple(path)
        self.cells = tuple(cells)
        self.convention = convention
        self._hash = hash((self.path, self.cells))

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def depth(self) -> int:
        return len(self.path)

    def path_string(self) -> str:
        return "".join("LR"[b] for b in self.path)

    def widths(self) -> tuple[float, ...]:
        return tuple(2.0 ** -cuts for _, cuts in self.cells)

    def __eq__(self, other):
        return (isinstance(other, Region) and self.path == other.path
                and self.cells == other.cells)

    def __hash__(self):
        return self._hash

    def __str__(self):
        spans = []
        for prefix, cuts in self.cells:
            scale = float(1 << cuts)
            spans.append(f"[{prefix / scale:.6g}, {(prefix + 1) / scale:.6g})")
        return "x".join(spans)

    def __repr__(self):
        return f"Region(path={self.path}, cells={self.cells})"


def unit_region(dim: int, convention: Convention | None = None) -> Region:
    conv = convention or Convention.default(dim)
    if len(conv.smaller_first) != dim:
        raise ValueError("convention dimensionality mismatch")
    return Region((), ((0, 0),) * dim, conv)


def split(region: Region, *, bits: int | None = None) -> tuple[Region, Region]:
    """Halve the region on its due axis (depth mod d) at the interval midpoint.

    When ``bits`` is given, refuses to cut past depth d*bits, the point where
    the cut plane would fall between fixed-point grid lines.
    """
    dim = region.dim
    if bits is not None and region.depth >= dim * bits:
        raise PrecisionExceeded(
            f"cannot split region at depth {region.depth} with {bits}-bit coordinates"
        )
    axis = region.depth % dim
    prefix, cuts = region.cells[axis]
    smaller = (prefix << 1, cuts + 1)
    larger = ((prefix << 1) | 1, cuts + 1)
    if region.convention.smaller_first[axis]:
        first, second = smaller, larger
    else:
        first, second = larger, smaller
    left_cells = region.cells[:axis] + (first,) + region.cells[axis + 1:]
    right_cells = region.cells[:axis] + (second,) + region.cells[axis + 1:]
    return (
        Region(region.path + (LEFT,), left_cells, region.convention),
        Region(region.path + (RIGHT,), right_cells, region.convention),
    )


def contains(region: Region, p: Point) -> bool:
    """Exact membership in the region's half-open dyadic box."""
    bits = p.bits
    for (prefix, cuts), a in zip(region.cells, p.axes):
        scaled = a << cuts
        if not (prefix << bits) <= scaled < ((prefix + 1) << bits):
            return False
    return True


def region_diameter(region: Region) -> float:
    """Euclidean length of the region's main diagonal."""
    return math.sqrt(sum(4.0 ** -cuts for _, cuts in region.cells))


def region_from_path_string(s: str, dim: int, convention: Convention | None = None) -> Region:
    region = unit_region(dim, convention)
    for ch in s:
        if ch not in "LR":
            raise ValueError(f"bad path character {ch!r}")
        region = split(region)[0 if ch == "L" else 1]
    return region


class DivisionNode:
    """One region of a division tree; leaves carry at most one point."""

    __slots__ = ("region", "point", "left", "right")

    def __init__(self, region: Region, point: Coord | None = None,
                 left: "DivisionNode | None" = None, right: "DivisionNode | None" = None):
        self.region = region
        self.point = point
        self.left = left
        self.right = right

    @property
    def is_leaf(self) -> bool:
        return self.left is None


class DivisionTree:
    """Binary tree of regions produced by recursive halving.

    Leaves partition the root region exactly; no leaf holds more than one
    input point.
    """

    def __init__(self, root: DivisionNode):
        self.root = root

    def nodes(self) -> Iterator[DivisionNode]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    def leaves(self) -> Iterator[DivisionNode]:
        """Leaves in depth-first order, left child first."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node
            else:
                stack.append(node.right)
                stack.append(node.left)

    def ordered_points(self) -> list[Coord]:
        """All stored points in traversal order (the total order on nodes)."""
        return [leaf.point for leaf in self.leaves() if leaf.point is not None]

    def locate(self, p: Point) -> DivisionNode:
        node = self.root
        if not contains(node.region, p):
            raise ValueError(f"{p} lies outside the tree root {node.region}")
        while not node.is_leaf:
            node = node.left if contains(node.left.region, p) else node.right
        return node


def quad_division(points: Iterable[Coord], region: Region | None = None, *,
                  dim: int | None = None,
                  convention: Convention | None = None) -> DivisionTree:
    """Recursively halve the region until every leaf holds at most one point.

    The top region is always cut once, even for zero or one point; deeper
    regions are cut only while they hold two or more.
    """
    pts = list(points)
    if pts:
        bits = pts[0].bits
        d = pts[0].dim
        for p in pts:
            if p.bits != bits or p.dim != d:
                raise ValueError("points must share bits and dimension")
        if len({p.axes for p in pts}) != len(pts):
            raise DuplicateCoordinate("input points must be pairwise distinct")
    else:
        bits = None
        if region is None and dim is None:
            raise ValueError("need region or dim for an empty point set")
        d = dim if region is None else region.dim
    if region is None:
        region = unit_region(d, convention)
    for p in pts:
        if not contains(region, p):
            raise ValueError(f"point {p} outside region {region}")
    return DivisionTree(_divide(region, pts, bits, top=True))


def _divide(region: Region, pts: list[Coord], bits: int | None, top: bool = False) -> DivisionNode:
    if not top and len(pts) <= 1:
        return DivisionNode(region, point=pts[0] if pts else None)
    left_region, right_region = split(region, bits=bits)
    left_pts = [p for p in pts if contains(left_region, p)]
    right_pts = [p for p in pts if not contains(left_region, p)]
    return DivisionNode(region,
                        left=_divide(left_region, left_pts, bits),
                        right=_divide(right_region, right_pts, bits))


@lru_cache(maxsize=1 << 16)
def _order_less(u: Coord, v: Coord, convention: Convention) -> bool:
    tree = quad_division([u, v], unit_region(u.dim, convention))
    for leaf in tree.leaves():
        if leaf.point is not None:
            return leaf.point == u
    raise AssertionError("two-point tree without points")


def order_compare(u: Coord, v: Coord, convention: Convention | None = None) -> int:
    """LESS iff u's leaf precedes v's in the left-first depth-first traversal
    of the division tree over {u, v}.  Total, irreflexive, transitive."""
    if u.bits == v.bits and u.axes == v.axes:
        raise DuplicateCoordinate(f"cannot order identical coordinates {u}")
    conv = convention or Convention.default(u.dim)
    return LESS if _order_less(u, v, conv) else GREATER


def interleave_key(p: Point, convention: Convention | None = None) -> int:
    """All axis bits interleaved round-major (axis 0 first, most significant
    bit first), complemented on axes whose larger half is the left child.

    Comparing keys orders points exactly like the division-tree traversal;
    this is the independent check against ``order_compare``.
    """
    conv = convention or Convention.default(p.dim)
    if len(conv.smaller_first) != p.dim:
        raise ValueError("convention dimensionality mismatch")
    key = 0
    axes = p.axes
    flags = conv.smaller_first
    for r in range(p.bits - 1, -1, -1):
        for a, sf in zip(axes, flags):
            bit = (a >> r) & 1
            if not sf:
                bit ^= 1
            key = (key << 1) | bit
    return key


def interleave_compare(u: Coord, v: Coord, convention: Convention | None = None) -> int:
    """Morton-style comparison of the interleaved bit streams."""
    if u.bits != v.bits:
        raise ValueError("cannot interleave-compare coordinates of different precision")
    if u.axes == v.axes:
        raise DuplicateCoordinate(f"cannot order identical coordinates {u}")
    conv = convention or Convention.default(u.dim)
    return LESS if interleave_key(u, conv) < interleave_key(v, conv) else GREATER


@lru_cache(maxsize=1 << 15)
def _compute_regions(v: Coord, left: Coord | None, right: Coord | None,
                     convention: Convention) -> tuple[Region, tuple[Region, ...]]:
    pts = [v]
    if left is not None:
        pts.append(left)
    if right is not None:
        pts.append(right)
    tree = quad_division(pts, unit_region(v.dim, convention))
    node = tree.root
    siblings: list[Region] = []
    while not node.is_leaf:
        if contains(node.left.region, v):
            siblings.append(node.right.region)
            node = node.left
        else:
            siblings.append(node.left.region)
            node = node.right
    return node.region, tuple(siblings)


def compute_regions(v: Coord, left: Coord | None = None, right: Coord | None = None,
                    convention: Convention | None = None) -> tuple[Region, tuple[Region, ...]]:
    """The node's own leaf A plus the ordered subareas it must cover.

    Built from the division tree over {v, left, right}: A is the leaf holding
    v; the covering sequence collects, per level of v's root-to-leaf path, the
    child that does not hold v, in ascending depth.  Together they tile the
    whole cube.

    Requires left to precede v and v to precede right; callers sanitize their
    variables before asking.
    """
    conv = convention or Convention.default(v.dim)
    if left is not None and order_compare(left, v, conv) is not LESS:
        raise OrderingViolation(f"left neighbor {left} does not precede {v}")
    if right is not None and order_compare(v, right, conv) is not LESS:
        raise OrderingViolation(f"right neighbor {right} does not follow {v}")
    return _compute_regions(v, left, right, conv)


def region_locate(tree: DivisionTree, p: Point) -> Region:
    """The unique leaf region containing p."""
    return tree.locate(p).region


def node_regions(tree: DivisionTree, v: Coord) -> tuple[Region, tuple[Region, ...]]:
    """A and the covering subareas of v read off an arbitrary division tree.

    Mirrors ``compute_regions`` but walks a tree that may hold any number of
    points; sibling regions may be inner nodes of that tree.
    """
    node = tree.root
    siblings: list[Region] = []
    if not contains(node.region, v):
        raise ValueError(f"{v} outside tree root")
    while not node.is_leaf:
        if contains(node.left.region, v):
            siblings.append(node.right.region)
            node = node.left
        else:
            siblings.append(node.left.region)
            node = node.right
    if node.point != v:
        raise ValueError(f"{v} is not a point of this tree")
    return node.region, tuple(siblings)


class Geometry:
    """Per-scenario geometry context: dimension, convention, memoized order."""

    def __init__(self, dim: int, convention: Convention | None = None):
        self.dim = dim
        self.convention = convention or Convention.default(dim)
        self.root = unit_region(dim, self.convention)
        self._keys: dict[Point, int] = {}

    def key(self, p: Point) -> int:
        k = self._keys.get(p)
        if k is None:
            k = interleave_key(p, self.convention)
            self._keys[p] = k
        return k

    def precedes(self, u: Coord, v: Coord) -> bool:
        return order_compare(u, v, self.convention) is LESS

    def compute_regions(self, v: Coord, left: Coord | None, right: Coord | None):
        return compute_regions(v, left, right, self.convention)

    def region_from_path(self, s: str) -> Region:
        return region_from_path_string(s, self.dim, self.convention)


# --- wire forms ---------------------------------------------------------


def point_to_json(p: Point) -> dict:
    return {"bits": p.bits, "axes": list(p.axes)}


def point_from_json(obj: dict) -> Point:
    return Point(obj["bits"], tuple(obj["axes"]))


def coord_from_json(obj: dict) -> Coord:
    return Coord(obj["bits"], tuple(obj["axes"]))


coord_to_json = point_to_json
