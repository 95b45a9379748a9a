"""Small 2D geometry kernel: half-plane tests, nearest seed, segment
intersection and centroids.

Everything is plain double precision with a fixed tie tolerance. Voronoi
cells are never built as polygons; cell membership is always answered with
:func:`nearest_seed`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np

EPSILON = 1e-9


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def distance(self, other: Point2D) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class Segment2D:
    a: Point2D
    b: Point2D

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise ValueError(f"degenerate segment at ({self.a.x}, {self.a.y})")

    @property
    def length(self) -> float:
        return self.a.distance(self.b)


@dataclass(frozen=True)
class HalfPlaneConstraint:
    """The device is closer to ``near_seed`` than to ``far_seed``."""

    near_seed: Point2D
    far_seed: Point2D

    def __post_init__(self) -> None:
        if self.near_seed == self.far_seed:
            raise ValueError("constraint seeds coincide")


class Side(IntEnum):
    # Values double as the +1/-1/0 encoding used by the grid tables.
    NEAR = 1
    FAR = -1
    TIE = 0


def satisfies_constraint(p: Point2D, c: HalfPlaneConstraint, epsilon: float = EPSILON) -> Side:
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    d_near = p.distance(c.near_seed)
    d_far = p.distance(c.far_seed)
    if d_near < d_far - epsilon:
        return Side.NEAR
    if d_far < d_near - epsilon:
        return Side.FAR
    return Side.TIE


def nearest_seed(p: Point2D, seeds: Sequence[Point2D]) -> int:
    """Index of the closest seed; the lowest index wins ties."""
    if len(seeds) == 0:
        raise ValueError("no seeds")
    best = 0
    best_d = p.distance(seeds[0])
    for i in range(1, len(seeds)):
        d = p.distance(seeds[i])
        if d < best_d:
            best, best_d = i, d
    return best


def _orient(ax: float, ay: float, bx: float, by: float, cx: float, cy: float) -> float:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, px, py) -> bool:
    # p is known to be collinear with a-b
    return min(ax, bx) - EPSILON <= px <= max(ax, bx) + EPSILON and (
        min(ay, by) - EPSILON <= py <= max(ay, by) + EPSILON
    )


def segments_intersect(s1: Segment2D, s2: Segment2D) -> bool:
    """Closed-segment intersection test. Touching endpoints and collinear
    overlap both count."""
    ax, ay, bx, by = s1.a.x, s1.a.y, s1.b.x, s1.b.y
    cx, cy, dx, dy = s2.a.x, s2.a.y, s2.b.x, s2.b.y
    # signed distances, so the tolerance is in meters
    l1, l2 = s1.length, s2.length
    o1 = _orient(ax, ay, bx, by, cx, cy) / l1
    o2 = _orient(ax, ay, bx, by, dx, dy) / l1
    o3 = _orient(cx, cy, dx, dy, ax, ay) / l2
    o4 = _orient(cx, cy, dx, dy, bx, by) / l2
    z1, z2, z3, z4 = (abs(o) <= EPSILON for o in (o1, o2, o3, o4))

    if not (z1 or z2 or z3 or z4):
        return (o1 > 0) != (o2 > 0) and (o3 > 0) != (o4 > 0)
    if z1 and _on_segment(ax, ay, bx, by, cx, cy):
        return True
    if z2 and _on_segment(ax, ay, bx, by, dx, dy):
        return True
    if z3 and _on_segment(cx, cy, dx, dy, ax, ay):
        return True
    if z4 and _on_segment(cx, cy, dx, dy, bx, by):
        return True
    # a touching point on a supporting line but off the other segment
    return False


def center_of_mass(points: Sequence[Point2D] | np.ndarray) -> Point2D:
    if len(points) == 0:
        raise ValueError("empty candidate set")
    if isinstance(points, np.ndarray):
        arr = points
    else:
        arr = np.array([(p.x, p.y) for p in points], dtype=float)
    cx, cy = arr.mean(axis=0)
    return Point2D(float(cx), float(cy))


def count_crossings(
    starts: np.ndarray, ends: np.ndarray, walls: np.ndarray
) -> np.ndarray:
    """Vectorized wall counting for many sight lines at once.

    ``starts`` and ``ends`` are (..., 2) arrays of sight-line endpoints,
    ``walls`` is a (W, 4) array of ``x1, y1, x2, y2``. A wall counts when it
    meets the *open* sight line: touching either endpoint does not count,
    passing through a wall's endpoint does. Collinear overlap of positive
    length counts.
    """
    shape = np.broadcast_shapes(starts.shape, ends.shape)[:-1]
    if len(walls) == 0:
        return np.zeros(shape, dtype=np.int32)
    p = np.broadcast_to(starts, shape + (2,))[..., None, :]
    q = np.broadcast_to(ends, shape + (2,))[..., None, :]
    w1 = walls[:, 0:2]
    w2 = walls[:, 2:4]

    los = q - p
    los_len = np.hypot(los[..., 0], los[..., 1])
    wall = w2 - w1
    wall_len = np.hypot(wall[:, 0], wall[:, 1])

    def cross(u, v):
        return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]

    # sight-line endpoints relative to the wall line
    o1 = cross(wall, p - w1) / wall_len
    o2 = cross(wall, q - w1) / wall_len
    safe_len = np.where(los_len > 0, los_len, 1.0)
    # wall endpoints relative to the sight line
    o3 = cross(los, w1 - p) / safe_len
    o4 = cross(los, w2 - p) / safe_len

    s1, s2 = np.sign(o1) * (np.abs(o1) > EPSILON), np.sign(o2) * (np.abs(o2) > EPSILON)
    s3, s4 = np.sign(o3) * (np.abs(o3) > EPSILON), np.sign(o4) * (np.abs(o4) > EPSILON)

    # endpoints strictly on opposite sides of the wall line, wall endpoints
    # not strictly on the same side of the sight line
    proper = (s1 * s2 < 0) & (s3 * s4 <= 0)

    # collinear: project the wall onto the sight line parameter and require
    # overlap with the open interval (0, 1)
    collinear = (s1 == 0) & (s2 == 0)
    if np.any(collinear):
        denom = np.where(los_len > 0, los_len**2, 1.0)
        t1 = ((w1 - p) * los).sum(axis=-1) / denom
        t2 = ((w2 - p) * los).sum(axis=-1) / denom
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        tol = EPSILON / np.where(los_len > 0, los_len, 1.0)
        overlap = (np.minimum(hi, 1.0) - np.maximum(lo, 0.0)) > tol
        proper = proper | (collinear & overlap & (los_len > 0))

    return proper.sum(axis=-1).astype(np.int32)
