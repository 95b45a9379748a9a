"""Online tracking: power normalization, wall compensation, window filters,
Voronoi clustering, pairwise constraint matching and location estimation.

Inside :func:`evaluate_constraints` every sample is expressed relative to the
strongest normalized sample of the window and snapped to 1e-9 dB. Adding a
constant to the whole window therefore leaves every downstream comparison
bit-for-bit unchanged, which is what makes the tracker insensitive to the
receiver's gain offset.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .floorplan import Floorplan
from .geometry import EPSILON, Point2D
from .gridder import GridPointData, VirtualGrid

log = logging.getLogger(__name__)

RSS_MIN_DBM = -120.0
RSS_MAX_DBM = 0.0
# resolution used to cancel float jitter in relative RSS values
SNAP_DECIMALS = 9


class EmptyScanError(ValueError):
    pass


class Filter(str, Enum):
    AVERAGE = "avg"
    MEDIAN = "median"
    PROBABILISTIC = "prob"


class Relation(IntEnum):
    A_STRONGER = 1
    B_STRONGER = -1


@dataclass(frozen=True)
class ScanSample:
    ap_id: str
    rss_dbm: float

    def __post_init__(self) -> None:
        if not RSS_MIN_DBM <= self.rss_dbm <= RSS_MAX_DBM:
            raise ValueError(f"RSS {self.rss_dbm} dBm from {self.ap_id!r} outside [-120, 0]")


@dataclass(frozen=True)
class ScanWindow:
    """Per-AP samples from the last ``w`` scan rounds, oldest first."""

    samples: Mapping[str, np.ndarray]
    w: int

    def __post_init__(self) -> None:
        for ap_id, s in self.samples.items():
            if not 1 <= len(s) <= self.w:
                raise ValueError(f"AP {ap_id!r} has {len(s)} samples for a window of {self.w}")

    @classmethod
    def from_lists(cls, samples: Mapping[str, Sequence[float]], w: int | None = None) -> ScanWindow:
        arrays = {k: np.asarray(v, dtype=float) for k, v in samples.items() if len(v)}
        if w is None:
            w = max((len(v) for v in arrays.values()), default=1)
        return cls(arrays, w)

    def shifted(self, offset_db: float) -> ScanWindow:
        return ScanWindow({k: v + offset_db for k, v in self.samples.items()}, self.w)

    @property
    def heard(self) -> tuple[str, ...]:
        return tuple(self.samples)


@dataclass(frozen=True)
class TrackerConfig:
    w: int = 7
    t: int = 6
    filter: Filter = Filter.PROBABILISTIC
    wall_c: float = 5.0
    epsilon: float = EPSILON

    def __post_init__(self) -> None:
        if self.w < 1 or self.t < 1:
            raise ValueError("window lengths w and t must be >= 1")
        if self.wall_c < 0:
            raise ValueError("wall attenuation factor must be >= 0")
        object.__setattr__(self, "filter", Filter(self.filter))


@dataclass(frozen=True)
class LocationEstimate:
    position: Point2D
    raw_position: Point2D
    candidate_count: int
    max_matches: int
    heard_ap_count: int
    strongest_ap: str = ""


@dataclass(frozen=True)
class ConstraintMatch:
    subset: np.ndarray  # grid point indices evaluated
    counts: np.ndarray  # matches per subset point
    strongest: int  # AP index in the floorplan
    heard: tuple[int, ...]  # AP indices in the floorplan
    n_pairs: int


# -- pre-processing -----------------------------------------------------------


def normalize_power(window: ScanWindow, plan: Floorplan) -> ScanWindow:
    """Subtract each AP's transmit power; drop samples from unknown APs."""
    tx = {ap.id: ap.tx_power_dbm for ap in plan.aps}
    out = {}
    for ap_id, s in window.samples.items():
        if ap_id not in tx:
            log.warning("dropping %d samples from AP %r not in the floorplan", len(s), ap_id)
            continue
        out[ap_id] = s - tx[ap_id]
    return ScanWindow(out, window.w)


def compensate_walls(rss: float, grid_point: GridPointData, ap_index: int, c: float) -> float:
    if c < 0:
        raise ValueError("wall attenuation factor must be >= 0")
    return rss + grid_point.wall_count[ap_index] * c


def filtered_value(samples: np.ndarray, kind: Filter) -> float:
    if len(samples) == 0:
        raise ValueError("no samples for AP")
    if kind is Filter.MEDIAN:
        return float(np.median(samples))
    return float(np.mean(samples))


def _bins(samples: np.ndarray) -> np.ndarray:
    return np.floor(np.round(samples, SNAP_DECIMALS)).astype(np.int64)


def histogram(samples: Sequence[float], lo: int | None = None, hi: int | None = None) -> tuple[int, np.ndarray]:
    """1 dB bin counts. Returns ``(first_bin, counts)``."""
    b = _bins(np.asarray(samples, dtype=float))
    lo = int(b.min()) if lo is None else lo
    hi = int(b.max()) if hi is None else hi
    return lo, np.bincount(b - lo, minlength=hi - lo + 1)


def prob_not_weaker(pa: np.ndarray, pb: np.ndarray) -> float:
    """Sum over bins i of Pr(A = i) * Pr(B <= i) for aligned histograms."""
    return float(np.dot(pa, np.cumsum(pb)))


def prob_stronger(samples_a: Sequence[float], samples_b: Sequence[float]) -> float:
    """Histogram estimate of the probability that A is received at least as
    strongly as B (1 dB bins, support clipped to [-120, 0] dBm)."""
    a = np.clip(np.asarray(samples_a, dtype=float), RSS_MIN_DBM, RSS_MAX_DBM)
    b = np.clip(np.asarray(samples_b, dtype=float), RSS_MIN_DBM, RSS_MAX_DBM)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("no samples for AP")
    lo = int(min(_bins(a).min(), _bins(b).min()))
    hi = int(max(_bins(a).max(), _bins(b).max()))
    _, ca = histogram(a, lo, hi)
    _, cb = histogram(b, lo, hi)
    return prob_not_weaker(ca / len(a), cb / len(b))


def compare_aps(samples_a: Sequence[float], samples_b: Sequence[float], kind: Filter | str) -> Relation:
    kind = Filter(kind)
    if len(samples_a) == 0 or len(samples_b) == 0:
        raise ValueError("no samples for AP")
    if kind is Filter.PROBABILISTIC:
        p = prob_stronger(samples_a, samples_b)
        return Relation.A_STRONGER if p > 0.5 else Relation.B_STRONGER
    fa = filtered_value(np.asarray(samples_a, dtype=float), kind)
    fb = filtered_value(np.asarray(samples_b, dtype=float), kind)
    return Relation.A_STRONGER if fa >= fb else Relation.B_STRONGER


# -- constraint evaluation -----------------------------------------------------


@dataclass(frozen=True)
class _Readings:
    """A window flattened for vectorised work: ``rel`` holds every sample
    relative to the window's strongest normalized sample, ``label`` the
    local AP slot (0..m-1) of each sample."""

    heard: np.ndarray  # floorplan AP indices, ascending
    rel: np.ndarray
    label: np.ndarray
    n: np.ndarray  # samples per heard AP

    def filtered(self, kind: Filter) -> np.ndarray:
        if kind is Filter.MEDIAN:
            bounds = np.concatenate([[0], np.cumsum(self.n)])
            return np.array([np.median(self.rel[bounds[a]:bounds[a + 1]]) for a in range(len(self.heard))])
        return np.bincount(self.label, weights=self.rel, minlength=len(self.heard)) / self.n


def _readings(window: ScanWindow, plan: Floorplan) -> _Readings:
    norm = normalize_power(window, plan)
    if not norm.samples:
        raise EmptyScanError("empty scan")
    index = {ap.id: i for i, ap in enumerate(plan.aps)}
    order = sorted(norm.samples, key=index.__getitem__)
    values = np.concatenate([norm.samples[k] for k in order])
    n = np.array([len(norm.samples[k]) for k in order])
    rel = np.round(values - values.max(), SNAP_DECIMALS)
    label = np.repeat(np.arange(len(order)), n)
    return _Readings(np.array([index[k] for k in order]), rel, label, n)


class _PairwiseProb:
    """Exact pair probabilities on integer bin counts.

    ``numerators(ks)[q, a, b]`` is ``n_a * n_b * Pr(B <= A + ks[q])`` where
    ``ks[q]`` is an integer dB shift applied to A.
    """

    def __init__(self, r: _Readings):
        bins = np.floor(r.rel).astype(np.int64)
        lo = int(bins.min())
        self.width = int(bins.max()) - lo + 1
        m = len(r.heard)
        # small integer counts: float64 products and sums stay exact
        flat = np.bincount(r.label * self.width + (bins - lo), minlength=m * self.width)
        self.counts = flat.reshape(m, self.width).astype(float)
        self.cum = np.cumsum(self.counts, axis=1)
        self.n = r.n.astype(float)
        self.total = np.outer(self.n, self.n)

    def numerators(self, ks: np.ndarray) -> np.ndarray:
        idx = np.arange(self.width)[None, :] + np.asarray(ks, dtype=np.int64)[:, None]  # (K, width)
        shifted = self.cum[:, np.clip(idx, 0, self.width - 1)]  # (m, K, width)
        shifted = np.where(idx < 0, 0.0, np.where(idx >= self.width, self.n[:, None, None], shifted))
        return self.counts[None] @ shifted.transpose(1, 2, 0)

    def stronger(self, ks: np.ndarray) -> np.ndarray:
        """Boolean (K, m, m): A beats B (P > 0.5) under each shift."""
        return 2 * self.numerators(ks) > self.total[None]


def _strongest_slot(r: _Readings, kind: Filter, prob: _PairwiseProb | None) -> int:
    """Local slot of the strongest heard AP; ties go to the lower AP index."""
    if kind is Filter.PROBABILISTIC:
        beats = prob.stronger(np.zeros(1, dtype=np.int64))[0]
        upper = np.triu(np.ones_like(beats), k=1)
        # round robin: pair (a, b), a < b, goes to a iff P(a, b) > 0.5
        wins = (beats & upper).sum(axis=1) + (~beats & upper).sum(axis=0)
        return int(np.argmax(wins))
    return int(np.argmax(r.filtered(kind)))


def evaluate_constraints(window: ScanWindow, grid: VirtualGrid, plan: Floorplan,
                         cfg: TrackerConfig) -> ConstraintMatch:
    if grid.ap_ids != plan.ap_ids:
        raise ValueError("grid was built for a different AP list")
    r = _readings(window, plan)
    kind = cfg.filter
    prob = _PairwiseProb(r) if kind is Filter.PROBABILISTIC else None

    heard = r.heard
    strongest = int(heard[_strongest_slot(r, kind, prob)])
    subset = grid.cells[strongest]
    m = len(heard)
    local_a, local_b = np.triu_indices(m, k=1)
    if len(local_a) == 0:
        return ConstraintMatch(subset, np.zeros(len(subset), dtype=np.int64), strongest, tuple(heard.tolist()), 0)

    cols = grid.pair_columns[heard[local_a], heard[local_b]]
    expected = grid.expected[subset[:, None], cols[None, :]]
    walls = grid.wall_count[subset[:, None], heard[None, :]] * cfg.wall_c

    if kind is Filter.PROBABILISTIC:
        # A gains walls_A * C and B gains walls_B * C; on integer bins the
        # comparison B <= A + s reduces to a whole-bin shift of floor(s).
        shift = np.floor(walls[:, local_a] - walls[:, local_b]).astype(np.int64)
        kmin = int(shift.min())
        ks = np.arange(kmin, int(shift.max()) + 1)
        table = prob.stronger(ks)[:, local_a, local_b]  # (K, pairs)
        a_wins = table[shift - kmin, np.arange(len(cols))[None, :]]
    else:
        comp = r.filtered(kind)[None, :] + walls
        a_wins = comp[:, local_a] >= comp[:, local_b]

    # expected: +1 closer to a, -1 closer to b, 0 tie (always a match)
    counts = np.where(a_wins, expected >= 0, expected <= 0).sum(axis=1)
    return ConstraintMatch(subset, counts, strongest, tuple(heard.tolist()), len(cols))


def estimate(match: ConstraintMatch, grid: VirtualGrid) -> LocationEstimate:
    if len(match.subset) == 0:
        raise ValueError("empty candidate set")
    best = int(match.counts.max())
    winners = match.subset[match.counts == best]
    cx, cy = grid.positions[winners].mean(axis=0)
    p = Point2D(float(cx), float(cy))
    return LocationEstimate(
        position=p,
        raw_position=p,
        candidate_count=len(winners),
        max_matches=best,
        heard_ap_count=len(match.heard),
        strongest_ap=grid.ap_ids[match.strongest],
    )


def smooth_track(history: Sequence[Point2D]) -> Point2D:
    if len(history) == 0:
        raise ValueError("empty history")
    xs = math.fsum(p.x for p in history) / len(history)
    ys = math.fsum(p.y for p in history) / len(history)
    return Point2D(xs, ys)


def locate_window(window: ScanWindow, grid: VirtualGrid, plan: Floorplan, cfg: TrackerConfig) -> LocationEstimate:
    """Raw (unsmoothed) estimate for a single window."""
    return estimate(evaluate_constraints(window, grid, plan, cfg), grid)


@dataclass
class Tracker:
    """One tracking session: keeps the last ``w`` scan rounds and the last
    ``t`` raw estimates."""

    plan: Floorplan
    grid: VirtualGrid
    cfg: TrackerConfig = field(default_factory=TrackerConfig)

    def __post_init__(self) -> None:
        self._rounds: deque[dict[str, float]] = deque(maxlen=self.cfg.w)
        self._history: deque[Point2D] = deque(maxlen=self.cfg.t)

    def reset(self) -> None:
        self._rounds.clear()
        self._history.clear()

    def push(self, scan: Mapping[str, float] | Iterable[ScanSample]) -> None:
        if isinstance(scan, Mapping):
            self._rounds.append(dict(scan))
        else:
            self._rounds.append({s.ap_id: s.rss_dbm for s in scan})

    def window(self) -> ScanWindow:
        samples: dict[str, list[float]] = {}
        for scan in self._rounds:
            for ap_id, rss in scan.items():
                samples.setdefault(ap_id, []).append(rss)
        return ScanWindow({k: np.asarray(v, dtype=float) for k, v in samples.items()}, self.cfg.w)

    def update(self) -> LocationEstimate:
        raw = locate_window(self.window(), self.grid, self.plan, self.cfg)
        self._history.append(raw.raw_position)
        return LocationEstimate(
            position=smooth_track(self._history),
            raw_position=raw.raw_position,
            candidate_count=raw.candidate_count,
            max_matches=raw.max_matches,
            heard_ap_count=raw.heard_ap_count,
            strongest_ap=raw.strongest_ap,
        )

    def step(self, scan: Mapping[str, float] | Iterable[ScanSample]) -> LocationEstimate:
        self.push(scan)
        return self.update()
