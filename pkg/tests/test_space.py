"""Geometry tests: exact splitting, ordering, and covering subareas."""

from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conftest import A4, B4, BITS10, C4, D4, FOUR, distinct_coords, odd_coord
from quadnet.space import (
    Convention,
    Coord,
    DivisionNode,
    DivisionTree,
    DuplicateCoordinate,
    GREATER,
    Geometry,
    LESS,
    OrderingViolation,
    Point,
    PrecisionExceeded,
    Region,
    compute_regions,
    contains,
    coord_from_json,
    coord_to_json,
    interleave_compare,
    interleave_key,
    node_regions,
    order_compare,
    quad_division,
    region_diameter,
    region_from_path_string,
    region_locate,
    split,
    unit_region,
)

# --- independent oracle -------------------------------------------------------
# A from-scratch splitter over Fraction boxes.  It shares no code with the
# implementation: boxes are (lo, hi) Fraction pairs, the left-first rule is
# spelled out per axis by hand, and recursion mirrors the published procedure
# (cut once, recurse only into halves holding two or more points).


def _oracle_boxes(points, dim):
    """DFS-ordered (box, point-or-None) leaves; box = tuple of (lo, hi)."""
    boxes = [(Fraction(0), Fraction(1))] * dim

    def smaller_first(axis):
        return not (dim == 2 and axis == 1)  # planar y: north (larger) first

    def locate(box, p, axis, mid):
        value = Fraction(p.axes[axis], 1 << p.bits)
        return value < mid

    def rec(box, pts, depth):
        if depth > 0 and len(pts) <= 1:
            return [(tuple(box), pts[0] if pts else None)]
        axis = depth % dim
        lo, hi = box[axis]
        mid = (lo + hi) / 2
        small = [p for p in pts if locate(box, p, axis, mid)]
        large = [p for p in pts if not locate(box, p, axis, mid)]
        small_box, large_box = list(box), list(box)
        small_box[axis] = (lo, mid)
        large_box[axis] = (mid, hi)
        if smaller_first(axis):
            first, fpts, second, spts = small_box, small, large_box, large
        else:
            first, fpts, second, spts = large_box, large, small_box, small
        return rec(first, fpts, depth + 1) + rec(second, spts, depth + 1)

    return rec(boxes, list(points), 0)


def _region_box(region):
    return tuple((Fraction(prefix, 1 << cuts), Fraction(prefix + 1, 1 << cuts))
                 for prefix, cuts in region.cells)


def box(*spans):
    return tuple((Fraction(a), Fraction(b)) for a, b in spans)


# --- split ---------------------------------------------------------------------


def test_split_root_is_vertical():
    left, right = split(unit_region(2))
    assert _region_box(left) == box((0, Fraction(1, 2)), (0, 1))
    assert _region_box(right) == box((Fraction(1, 2), 1), (0, 1))
    assert left.path == (0,) and right.path == (1,)


def test_split_west_half_is_horizontal_north_first():
    west, _ = split(unit_region(2))
    north, south = split(west)
    assert _region_box(north) == box((0, Fraction(1, 2)), (Fraction(1, 2), 1))
    assert _region_box(south) == box((0, Fraction(1, 2)), (0, Fraction(1, 2)))


def test_split_cycles_through_axes_in_3d():
    region = unit_region(3)
    for depth in range(6):
        child = split(region)[0]
        cut_axis = next(i for i in range(3)
                        if child.cells[i] != region.cells[i])
        assert cut_axis == depth % 3
        region = child


def test_split_precision_guard():
    region = unit_region(2)
    for _ in range(4):
        region = split(region, bits=2)[0]
    with pytest.raises(PrecisionExceeded):
        split(region, bits=2)
    # unguarded splitting may continue
    split(region)


# --- contains --------------------------------------------------------------------


def test_contains_root_covers_everything():
    root = unit_region(2)
    rng = random.Random(0)
    for _ in range(20):
        assert contains(root, odd_coord(rng, 8, 2))


def test_contains_respects_axis_interval():
    west = split(unit_region(2))[0]
    assert not contains(west, Point(4, (12, 8)))   # x = 0.75
    north_west = split(west)[0]
    assert contains(north_west, Point(4, (4, 12)))  # (0.25, 0.75)


# --- quad_division ---------------------------------------------------------------


def test_single_point_tree_has_two_leaves():
    v = Coord(8, (51, 201))
    tree = quad_division([v])
    leaves = list(tree.leaves())
    assert len(leaves) == 2
    assert [leaf.point for leaf in leaves].count(v) == 1
    assert [leaf.point for leaf in leaves].count(None) == 1


def test_two_points_split_once_by_root_cut():
    u = Coord(4, (5, 9))    # x < 0.5
    v = Coord(4, (11, 9))   # x > 0.5
    tree = quad_division([u, v])
    leaves = list(tree.leaves())
    assert len(leaves) == 2
    assert [leaf.point for leaf in leaves] == [u, v]


def test_four_node_arrangement_matches_hand_trace_and_oracle():
    tree = quad_division(FOUR)
    leaves = list(tree.leaves())
    got = [(_region_box(leaf.region), leaf.point) for leaf in leaves]
    expected = [
        (box((0, Fraction(1, 4)), (Fraction(1, 2), 1)), A4),
        (box((Fraction(1, 4), Fraction(1, 2)), (Fraction(1, 2), 1)), B4),
        (box((0, Fraction(1, 2)), (0, Fraction(1, 2))), None),   # empty SW quarter
        (box((Fraction(1, 2), 1), (Fraction(1, 2), 1)), D4),
        (box((Fraction(1, 2), 1), (0, Fraction(1, 2))), C4),
    ]
    assert got == expected
    assert got == _oracle_boxes(FOUR, 2)


def test_duplicate_points_fault():
    v = Coord(8, (51, 201))
    with pytest.raises(DuplicateCoordinate):
        quad_division([v, Coord(8, (51, 201))])


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_division_matches_oracle_and_partitions(data):
    dim = data.draw(st.sampled_from([2, 3]))
    bits = data.draw(st.sampled_from([4, 6, 8]))
    rng = random.Random(data.draw(st.integers(0, 10**6)))
    n = data.draw(st.integers(0, 9))
    pts = distinct_coords(rng, n, bits=bits, dim=dim) if n else []
    tree = quad_division(pts, unit_region(dim)) if pts else quad_division([], dim=dim)
    leaves = [(_region_box(leaf.region), leaf.point) for leaf in tree.leaves()]
    assert leaves == _oracle_boxes(pts, dim)
    # exact partition: total measure 1, pairwise disjoint
    total = Fraction(0)
    for b, _ in leaves:
        measure = Fraction(1)
        for lo, hi in b:
            measure *= hi - lo
        total += measure
    assert total == 1
    for i, (b1, _) in enumerate(leaves):
        for b2, _ in leaves[i + 1:]:
            overlaps = all(max(l1, l2) < min(h1, h2)
                           for (l1, h1), (l2, h2) in zip(b1, b2))
            assert not overlaps
    # minimality below the root: inner regions hold at least two points
    for node in tree.nodes():
        if not node.is_leaf and node.region.depth > 0:
            inside = sum(1 for p in pts if contains(node.region, p))
            assert inside >= 2


# --- ordering ---------------------------------------------------------------------


def test_order_west_before_east():
    u = Coord(4, (5, 9))
    v = Coord(4, (11, 9))
    assert order_compare(u, v) is LESS
    assert order_compare(v, u) is GREATER


def test_order_north_before_south():
    u = Coord(4, (5, 11))   # same x, north
    v = Coord(4, (5, 5))
    assert order_compare(u, v) is LESS


def test_order_four_nodes():
    import functools
    ranked = sorted(FOUR, key=functools.cmp_to_key(order_compare))
    assert ranked == [A4, B4, D4, C4]


def test_order_equal_coordinates_fault():
    v = Coord(4, (5, 9))
    with pytest.raises(DuplicateCoordinate):
        order_compare(v, Coord(4, (5, 9)))
    with pytest.raises(DuplicateCoordinate):
        interleave_compare(v, Coord(4, (5, 9)))


def test_interleave_matches_order_on_examples():
    assert interleave_compare(Coord(4, (5, 9)), Coord(4, (11, 9))) is LESS
    for u in FOUR:
        for v in FOUR:
            if u != v:
                assert interleave_compare(u, v) == order_compare(u, v)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_order_oracle_equivalence_and_totality(data):
    dim = data.draw(st.sampled_from([2, 3, 4]))
    bits = data.draw(st.sampled_from([3, 5, 8]))
    rng = random.Random(data.draw(st.integers(0, 10**6)))
    u, v, w = distinct_coords(rng, 3, bits=bits, dim=dim)
    uv = order_compare(u, v)
    assert uv in (LESS, GREATER)
    assert order_compare(v, u) == -uv
    assert interleave_compare(u, v) == uv
    # transitivity: no cycles among the three
    r1 = order_compare(u, v) is LESS
    r2 = order_compare(v, w) is LESS
    r3 = order_compare(w, u) is LESS
    assert not (r1 == r2 == r3)


def test_global_traversal_equals_pairwise_sort():
    rng = random.Random(11)
    pts = distinct_coords(rng, 12, bits=9, dim=2)
    tree = quad_division(pts)
    import functools
    ranked = sorted(pts, key=functools.cmp_to_key(order_compare))
    assert tree.ordered_points() == ranked


# --- compute_regions ---------------------------------------------------------------


def test_lone_node_covers_other_half():
    v = Coord(8, (51, 201))
    own, targets = compute_regions(v)
    assert contains(own, v)
    assert len(targets) == 1
    assert not contains(targets[0], v)


def test_compute_regions_four_node_example():
    own, targets = compute_regions(A4, None, B4)
    assert _region_box(own) == box((0, Fraction(1, 4)), (Fraction(1, 2), 1))
    assert [_region_box(t) for t in targets] == [
        box((Fraction(1, 2), 1), (0, 1)),                       # east half
        box((0, Fraction(1, 2)), (0, Fraction(1, 2))),          # SW quarter
        box((Fraction(1, 4), Fraction(1, 2)), (Fraction(1, 2), 1)),  # B4's leaf
    ]
    assert len(targets) == 3


def test_compute_regions_rejects_misordered_neighbors():
    with pytest.raises(OrderingViolation):
        compute_regions(B4, A4, A4)   # right neighbor precedes v
    with pytest.raises(OrderingViolation):
        compute_regions(A4, B4, None)  # left neighbor follows v


@settings(max_examples=120, deadline=None)
@given(st.data())
def test_compute_regions_tiles_the_cube(data):
    dim = data.draw(st.sampled_from([2, 3]))
    rng = random.Random(data.draw(st.integers(0, 10**6)))
    pts = distinct_coords(rng, 3, bits=7, dim=dim)
    import functools
    left, v, right = sorted(pts, key=functools.cmp_to_key(order_compare))
    use_left = data.draw(st.booleans())
    use_right = data.draw(st.booleans())
    own, targets = compute_regions(v, left if use_left else None,
                                   right if use_right else None)
    regions = [own, *targets]
    total = Fraction(0)
    for r in regions:
        measure = Fraction(1)
        for lo, hi in _region_box(r):
            measure *= hi - lo
        total += measure
    assert total == 1
    for t in targets:
        assert not contains(t, v)
        parent = region_from_path_string(t.path_string()[:-1], dim)
        assert contains(parent, v)
    # canonical order: ascending depth
    assert [t.depth for t in targets] == sorted(t.depth for t in targets)


@settings(max_examples=120, deadline=None)
@given(st.data())
def test_compute_regions_monotone_refinement(data):
    """Closer neighbors only refine the covering set, never shrink it."""
    dim = data.draw(st.sampled_from([2, 3]))
    rng = random.Random(data.draw(st.integers(0, 10**6)))
    pts = distinct_coords(rng, 5, bits=7, dim=dim)
    import functools
    far_l, near_l, v, near_r, far_r = sorted(
        pts, key=functools.cmp_to_key(order_compare))
    old_left = data.draw(st.sampled_from([None, far_l, near_l]))
    old_right = data.draw(st.sampled_from([None, far_r, near_r]))
    new_left = near_l if old_left is not None or data.draw(st.booleans()) else None
    new_right = near_r if old_right is not None or data.draw(st.booleans()) else None
    _, old_targets = compute_regions(v, old_left, old_right)
    _, new_targets = compute_regions(v, new_left, new_right)
    if new_left is not None and new_right is not None:
        assert set(old_targets) <= set(new_targets)


# --- locate and diameter --------------------------------------------------------------


def test_locate_degenerate_tree_returns_root():
    tree = DivisionTree(DivisionNode(unit_region(2)))
    assert region_locate(tree, Point(4, (3, 3))) == unit_region(2)


def test_locate_four_node_example():
    tree = quad_division(FOUR)
    got = region_locate(tree, Point(BITS10, (921, 921)))  # ~(0.9, 0.9)
    assert _region_box(got) == box((Fraction(1, 2), 1), (Fraction(1, 2), 1))


def test_locate_is_unique():
    tree = quad_division(FOUR)
    rng = random.Random(3)
    for _ in range(50):
        p = Point(BITS10, (rng.randrange(1 << BITS10), rng.randrange(1 << BITS10)))
        hits = [leaf.region for leaf in tree.leaves() if contains(leaf.region, p)]
        assert hits == [region_locate(tree, p)]


def test_diameter_values():
    root = unit_region(2)
    assert region_diameter(root) == pytest.approx(math.sqrt(2))
    quarter = split(split(root)[0])[0]
    assert region_diameter(quarter) == pytest.approx(0.7071, abs=1e-4)
    # after 4*log2(n) cuts the diagonal is sqrt(2)/n^2
    n = 4
    region = root
    for _ in range(4 * 2):
        region = split(region)[0]
    assert region_diameter(region) == pytest.approx(math.sqrt(2) / n ** 2)


# --- global-versus-local equivalence ---------------------------------------------------


def test_node_regions_matches_local_computation():
    rng = random.Random(23)
    pts = distinct_coords(rng, 10, bits=9, dim=2)
    tree = quad_division(pts)
    ordered = tree.ordered_points()
    for i, v in enumerate(ordered):
        left = ordered[i - 1] if i else None
        right = ordered[i + 1] if i + 1 < len(ordered) else None
        assert node_regions(tree, v) == compute_regions(v, left, right)


# --- serialization ---------------------------------------------------------------------


def test_region_path_string_round_trip():
    region = split(split(unit_region(2))[1])[0]
    assert region.path_string() == "RL"
    assert region_from_path_string("RL", 2) == region


def test_coord_json_round_trip():
    c = Coord(10, (103, 921))
    assert coord_from_json(coord_to_json(c)) == c
    assert coord_to_json(c) == {"bits": 10, "axes": [103, 921]}


def test_coord_validation():
    with pytest.raises(ValueError):
        Coord(4, (2, 5))        # even numerator
    with pytest.raises(ValueError):
        Coord(4, (5,))          # one axis
    with pytest.raises(ValueError):
        Coord(0, (1, 1))        # zero bits
    with pytest.raises(ValueError):
        Point(4, (16, 3))       # out of range


def test_interleave_key_prefix_matches_containment():
    """A region's path bits are exactly the shared key prefix of its points."""
    rng = random.Random(5)
    geo = Geometry(2)
    pts = distinct_coords(rng, 8, bits=6, dim=2)
    tree = quad_division(pts)
    width = 2 * 6
    for node in tree.nodes():
        region = node.region
        prefix = 0
        for b in region.path:
            prefix = (prefix << 1) | b
        for p in pts:
            expected = (geo.key(p) >> (width - region.depth)) == prefix \
                if region.depth else True
            assert contains(region, p) == expected
