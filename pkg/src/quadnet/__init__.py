"""Self-stabilizing quadtree overlay: exact geometry, protocol state machine,
deterministic simulator, verification oracles, and reporting."""

from .space import (
    Convention,
    Coord,
    Geometry,
    Point,
    Region,
    compute_regions,
    contains,
    interleave_compare,
    order_compare,
    quad_division,
    region_diameter,
    region_locate,
    split,
    unit_region,
)

__all__ = [
    "Convention",
    "Coord",
    "Geometry",
    "Point",
    "Region",
    "compute_regions",
    "contains",
    "interleave_compare",
    "order_compare",
    "quad_division",
    "region_diameter",
    "region_locate",
    "split",
    "unit_region",
]

__version__ = "0.1.0"
