"""Shared coordinate builders for the test suite."""

from __future__ import annotations

import random

from quadnet.space import Coord


def odd_coord(rng: random.Random, bits: int, dim: int) -> Coord:
    return Coord(bits, tuple(rng.randrange(1 << bits) | 1 for _ in range(dim)))


def distinct_coords(rng: random.Random, n: int, bits: int = 16, dim: int = 2) -> list[Coord]:
    seen: set[tuple[int, ...]] = set()
    out: list[Coord] = []
    while len(out) < n:
        c = odd_coord(rng, bits, dim)
        if c.axes not in seen:
            seen.add(c.axes)
            out.append(c)
    return out


# The hand-traced four-node arrangement used across the suite: one node per
# quadrant-ish position, with the south-west quarter left empty.
BITS10 = 10
A4 = Coord(BITS10, (103, 921))   # ~(0.1006, 0.8994) far north-west
B4 = Coord(BITS10, (409, 615))   # ~(0.3994, 0.6006) north-west, east of A4
C4 = Coord(BITS10, (615, 205))   # ~(0.6006, 0.2002) south-east
D4 = Coord(BITS10, (921, 819))   # ~(0.8994, 0.7998) north-east
FOUR = [A4, B4, C4, D4]
