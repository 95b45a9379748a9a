"""Area of interest: rectangular bounds, access points and walls.

Floorplan files are JSON::

    {"bounds": {"w": 26, "h": 17},
     "aps": [{"id": "b1", "x": 2.6, "y": 4.25, "tx_power_dbm": 0.0}, ...],
     "walls": [{"x1": 0, "y1": 7, "x2": 26, "y2": 7}, ...]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from .geometry import Point2D, Segment2D, count_crossings

CLAMP_TOLERANCE = 1e-6


class FloorplanError(ValueError):
    pass


@dataclass(frozen=True)
class AccessPoint:
    id: str
    position: Point2D
    tx_power_dbm: float


@dataclass(frozen=True)
class Floorplan:
    width: float
    height: float
    aps: tuple[AccessPoint, ...]
    walls: tuple[Segment2D, ...] = ()
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise FloorplanError(f"bounds must have positive area, got {self.width}x{self.height}")
        if len(self.aps) == 0:
            raise FloorplanError("floorplan needs at least one AP")
        seen: dict[str, AccessPoint] = {}
        positions: dict[tuple[float, float], str] = {}
        for ap in self.aps:
            if ap.id in seen:
                raise FloorplanError(f"duplicate AP id {ap.id!r}")
            seen[ap.id] = ap
            if not self.contains(ap.position):
                raise FloorplanError(f"AP {ap.id!r} outside bounds at ({ap.position.x}, {ap.position.y})")
            key = (ap.position.x, ap.position.y)
            if key in positions:
                raise FloorplanError(f"coincident APs {positions[key]!r} and {ap.id!r}")
            positions[key] = ap.id
        for k, wall in enumerate(self.walls):
            for end in (wall.a, wall.b):
                if not self.contains(end, CLAMP_TOLERANCE):
                    raise FloorplanError(f"wall {k} endpoint ({end.x}, {end.y}) outside bounds")

    def contains(self, p: Point2D, tol: float = 0.0) -> bool:
        return -tol <= p.x <= self.width + tol and -tol <= p.y <= self.height + tol

    @property
    def n_aps(self) -> int:
        return len(self.aps)

    @property
    def ap_ids(self) -> tuple[str, ...]:
        return tuple(ap.id for ap in self.aps)

    def ap_index(self, ap_id: str) -> int:
        for i, ap in enumerate(self.aps):
            if ap.id == ap_id:
                return i
        raise KeyError(ap_id)

    def ap_positions(self) -> np.ndarray:
        return np.array([(ap.position.x, ap.position.y) for ap in self.aps], dtype=float)

    def tx_powers(self) -> np.ndarray:
        return np.array([ap.tx_power_dbm for ap in self.aps], dtype=float)

    def wall_array(self) -> np.ndarray:
        if not self.walls:
            return np.zeros((0, 4))
        return np.array([(w.a.x, w.a.y, w.b.x, w.b.y) for w in self.walls], dtype=float)

    def with_tx_delta(self, delta_db: float) -> Floorplan:
        aps = tuple(replace(ap, tx_power_dbm=ap.tx_power_dbm + delta_db) for ap in self.aps)
        return replace(self, aps=aps)

    def with_aps(self, aps: Iterable[AccessPoint]) -> Floorplan:
        return replace(self, aps=tuple(aps))

    def without_walls(self) -> Floorplan:
        return replace(self, walls=())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "bounds": {"w": self.width, "h": self.height},
            "aps": [
                {"id": ap.id, "x": ap.position.x, "y": ap.position.y, "tx_power_dbm": ap.tx_power_dbm}
                for ap in self.aps
            ],
            "walls": [{"x1": w.a.x, "y1": w.a.y, "x2": w.b.x, "y2": w.b.y} for w in self.walls],
        }


def _clamp(v: float, hi: float) -> float:
    if -CLAMP_TOLERANCE <= v < 0:
        return 0.0
    if hi < v <= hi + CLAMP_TOLERANCE:
        return hi
    return v


def floorplan_from_dict(data: dict) -> Floorplan:
    try:
        width = float(data["bounds"]["w"])
        height = float(data["bounds"]["h"])
        aps = tuple(
            AccessPoint(
                id=str(entry["id"]),
                position=Point2D(float(entry["x"]), float(entry["y"])),
                tx_power_dbm=float(entry["tx_power_dbm"]),
            )
            for entry in data["aps"]
        )
        walls = []
        for k, entry in enumerate(data.get("walls", [])):
            a = Point2D(_clamp(float(entry["x1"]), width), _clamp(float(entry["y1"]), height))
            b = Point2D(_clamp(float(entry["x2"]), width), _clamp(float(entry["y2"]), height))
            try:
                walls.append(Segment2D(a, b))
            except ValueError as exc:
                raise FloorplanError(f"wall {k}: {exc}") from exc
    except (KeyError, TypeError) as exc:
        raise FloorplanError(f"malformed floorplan: missing or invalid {exc}") from exc
    return Floorplan(width, height, aps, tuple(walls), name=str(data.get("name", "")))


def load_floorplan(path: str | Path) -> Floorplan:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FloorplanError(f"{path}: parse error: {exc}") from exc
    return floorplan_from_dict(data)


def save_floorplan(plan: Floorplan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan.to_dict(), indent=2) + "\n")


def reference_testbed() -> Floorplan:
    """The bundled 26 x 17 m, 10-beacon reconstruction of the campus floor."""
    text = resources.files("incvoronoi").joinpath("data/testbed.json").read_text()
    return floorplan_from_dict(json.loads(text))


def count_walls(p: Point2D, ap: AccessPoint, plan: Floorplan) -> int:
    """Walls met by the open sight line from ``p`` to ``ap``."""
    start = np.array([p.x, p.y])
    end = np.array([ap.position.x, ap.position.y])
    return int(count_crossings(start, end, plan.wall_array()))


def wall_count_matrix(points: np.ndarray, plan: Floorplan) -> np.ndarray:
    """(P, n) wall counts between every point and every AP."""
    walls = plan.wall_array()
    aps = plan.ap_positions()
    out = np.zeros((len(points), plan.n_aps), dtype=np.int32)
    if len(walls) == 0:
        return out
    chunk = max(1, 200_000 // max(1, len(walls) * plan.n_aps))
    for lo in range(0, len(points), chunk):
        pts = points[lo : lo + chunk]
        out[lo : lo + chunk] = count_crossings(pts[:, None, :], aps[None, :, :], walls)
    return out


def thin_aps(plan: Floorplan, keep: int) -> Floorplan:
    """Keep ``keep`` APs spread as evenly as possible (farthest-point order
    seeded at the AP closest to the centre)."""
    if not 1 <= keep <= plan.n_aps:
        raise FloorplanError(f"cannot keep {keep} of {plan.n_aps} APs")
    pos = plan.ap_positions()
    centre = np.array([plan.width / 2, plan.height / 2])
    chosen = [int(np.argmin(np.hypot(*(pos - centre).T)))]
    d = np.hypot(*(pos - pos[chosen[0]]).T)
    while len(chosen) < keep:
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, np.hypot(*(pos - pos[nxt]).T))
    return plan.with_aps(plan.aps[i] for i in sorted(chosen))
