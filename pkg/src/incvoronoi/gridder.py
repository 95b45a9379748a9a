"""Offline phase: lay a virtual grid over the floorplan and precompute what
the online tracker needs at every grid point.

Per point we keep the distance to every AP, the wall count to every AP, the
Voronoi owner (closest AP) and, for every unordered AP pair ``(i, j)`` with
``i < j``, the expected relation encoded as ``+1`` (closer to ``i``), ``-1``
(closer to ``j``) or ``0`` (tie within ``epsilon``).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .floorplan import Floorplan, wall_count_matrix
from .geometry import EPSILON, Point2D

CACHE_FORMAT = 1


@dataclass(frozen=True)
class GridPointData:
    position: Point2D
    ap_distance: np.ndarray
    wall_count: np.ndarray
    voronoi_owner: int
    expected_relation: dict[tuple[int, int], int]


@dataclass(frozen=True, eq=False)
class VirtualGrid:
    spacing: float
    nx: int
    ny: int
    ap_ids: tuple[str, ...]
    positions: np.ndarray  # (P, 2)
    ap_distance: np.ndarray  # (P, n)
    wall_count: np.ndarray  # (P, n) int32
    owner: np.ndarray  # (P,) int64
    pairs: np.ndarray  # (K, 2) with i < j, lexicographic
    expected: np.ndarray  # (P, K) int8
    epsilon: float = EPSILON

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def n_aps(self) -> int:
        return len(self.ap_ids)

    def pair_index(self, i: int, j: int) -> int:
        """Column of the unordered pair {i, j} in ``expected``."""
        if i == j:
            raise ValueError("a pair needs two distinct APs")
        i, j = min(i, j), max(i, j)
        n = self.n_aps
        return i * (2 * n - i - 1) // 2 + (j - i - 1)

    @cached_property
    def pair_columns(self) -> np.ndarray:
        """(n, n) lookup of ``pair_index``; -1 on the diagonal."""
        cols = np.full((self.n_aps, self.n_aps), -1, dtype=np.int64)
        for c, (i, j) in enumerate(self.pairs):
            cols[i, j] = cols[j, i] = c
        cols.setflags(write=False)
        return cols

    @cached_property
    def cells(self) -> tuple[np.ndarray, ...]:
        """Grid point indices of every AP's Voronoi cell."""
        out = tuple(np.flatnonzero(self.owner == a) for a in range(self.n_aps))
        _freeze(*out)
        return out

    def point(self, k: int) -> GridPointData:
        rel = {(int(a), int(b)): int(self.expected[k, c]) for c, (a, b) in enumerate(self.pairs)}
        return GridPointData(
            position=Point2D(float(self.positions[k, 0]), float(self.positions[k, 1])),
            ap_distance=self.ap_distance[k],
            wall_count=self.wall_count[k],
            voronoi_owner=int(self.owner[k]),
            expected_relation=rel,
        )

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "positions": self.positions,
            "ap_distance": self.ap_distance,
            "wall_count": self.wall_count,
            "owner": self.owner,
            "pairs": self.pairs,
            "expected": self.expected,
        }


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


def lattice(width: float, height: float, spacing: float) -> tuple[np.ndarray, int, int]:
    """Cell-centre lattice anchored at ``(spacing/2, spacing/2)``, row-major
    in y then x."""
    nx = int(math.floor(width / spacing + 1e-9))
    ny = int(math.floor(height / spacing + 1e-9))
    xs = spacing / 2 + spacing * np.arange(nx)
    ys = spacing / 2 + spacing * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()]), nx, ny


def all_pairs(n: int) -> np.ndarray:
    return np.array([(i, j) for i in range(n) for j in range(i + 1, n)], dtype=np.int64).reshape(-1, 2)


def expected_relations(distance: np.ndarray, pairs: np.ndarray, epsilon: float = EPSILON) -> np.ndarray:
    di = distance[:, pairs[:, 0]]
    dj = distance[:, pairs[:, 1]]
    rel = np.zeros(di.shape, dtype=np.int8)
    rel[di < dj - epsilon] = 1
    rel[dj < di - epsilon] = -1
    return rel


def build_grid(plan: Floorplan, spacing: float, epsilon: float = EPSILON) -> VirtualGrid:
    if not spacing > 0:
        raise ValueError(f"grid spacing must be positive, got {spacing}")
    if spacing > min(plan.width, plan.height):
        raise ValueError(f"grid spacing {spacing} exceeds the floorplan's smaller side")
    positions, nx, ny = lattice(plan.width, plan.height, spacing)
    aps = plan.ap_positions()
    delta = positions[:, None, :] - aps[None, :, :]
    distance = np.hypot(delta[..., 0], delta[..., 1])
    walls = wall_count_matrix(positions, plan)
    owner = np.argmin(distance, axis=1).astype(np.int64)
    pairs = all_pairs(plan.n_aps)
    expected = expected_relations(distance, pairs, epsilon)
    _freeze(positions, distance, walls, owner, pairs, expected)
    return VirtualGrid(
        spacing=float(spacing),
        nx=nx,
        ny=ny,
        ap_ids=plan.ap_ids,
        positions=positions,
        ap_distance=distance,
        wall_count=walls,
        owner=owner,
        pairs=pairs,
        expected=expected,
        epsilon=epsilon,
    )


def cell_points(grid: VirtualGrid, ap_index: int) -> np.ndarray:
    """Indices of the grid points inside AP ``ap_index``'s Voronoi cell."""
    if not 0 <= ap_index < grid.n_aps:
        raise IndexError(f"AP index {ap_index} out of range for {grid.n_aps} APs")
    return grid.cells[ap_index]


def grid_cache_key(plan: Floorplan, spacing: float, epsilon: float = EPSILON) -> str:
    payload = json.dumps(
        {"plan": plan.to_dict() | {"name": ""}, "spacing": repr(float(spacing)),
         "epsilon": repr(epsilon), "format": CACHE_FORMAT},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def save_grid(grid: VirtualGrid, path: str | Path) -> None:
    meta = json.dumps({"spacing": grid.spacing, "nx": grid.nx, "ny": grid.ny,
                       "ap_ids": list(grid.ap_ids), "epsilon": grid.epsilon})
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(meta), **grid.arrays())


def load_grid(path: str | Path) -> VirtualGrid:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        arrays = {k: data[k].copy() for k in ("positions", "ap_distance", "wall_count", "owner", "pairs", "expected")}
    _freeze(*arrays.values())
    return VirtualGrid(
        spacing=float(meta["spacing"]), nx=int(meta["nx"]), ny=int(meta["ny"]),
        ap_ids=tuple(meta["ap_ids"]), epsilon=float(meta["epsilon"]), **arrays,
    )


def build_grid_cached(plan: Floorplan, spacing: float, cache_dir: str | Path,
                      epsilon: float = EPSILON) -> VirtualGrid:
    cache_dir = Path(cache_dir)
    path = cache_dir / f"grid-{grid_cache_key(plan, spacing, epsilon)}.npz"
    if path.exists():
        return load_grid(path)
    grid = build_grid(plan, spacing, epsilon)
    cache_dir.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    save_grid(grid, tmp)
    tmp.replace(path)
    return grid
