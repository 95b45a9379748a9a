"""Comparison systems: Horus-style probabilistic fingerprinting and weighted
centroid.

Fingerprinting works on raw (not power-normalized) RSS, as a survey-based
system would. Both baselines filter a query window with its per-AP mean.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .floorplan import Floorplan
from .geometry import Point2D
from .localizer import EmptyScanError, ScanWindow, normalize_power
from .simulator import Trace

log = logging.getLogger(__name__)

BIN_LO = -120
BIN_HI = 0
N_BINS = BIN_HI - BIN_LO + 1
FLOOR_PROBABILITY = 1e-4


@dataclass(frozen=True, eq=False)
class Fingerprint:
    ap_ids: tuple[str, ...]
    locations: np.ndarray  # (L, 2)
    counts: np.ndarray  # (L, n, N_BINS) sample counts per 1 dB bin
    spacing: float
    metadata: Mapping[str, object] = field(default_factory=dict)

    @property
    def heard_counts(self) -> np.ndarray:
        return self.counts.sum(axis=2)

    def probabilities(self) -> np.ndarray:
        heard = self.heard_counts[..., None]
        return np.divide(self.counts, heard, out=np.zeros(self.counts.shape), where=heard > 0)

    def to_dict(self) -> dict:
        hist = []
        for k in range(len(self.locations)):
            per_ap = {}
            for a, ap_id in enumerate(self.ap_ids):
                nz = np.flatnonzero(self.counts[k, a])
                if len(nz):
                    per_ap[ap_id] = {str(BIN_LO + int(b)): int(self.counts[k, a, b]) for b in nz}
            hist.append(per_ap)
        return {
            "metadata": dict(self.metadata),
            "spacing": self.spacing,
            "ap_ids": list(self.ap_ids),
            "locations": self.locations.tolist(),
            "histograms": hist,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Fingerprint:
        ap_ids = tuple(data["ap_ids"])
        locs = np.array(data["locations"], dtype=float).reshape(-1, 2)
        counts = np.zeros((len(locs), len(ap_ids), N_BINS), dtype=np.int64)
        index = {a: i for i, a in enumerate(ap_ids)}
        for k, per_ap in enumerate(data["histograms"]):
            for ap_id, bins in per_ap.items():
                for b, c in bins.items():
                    counts[k, index[ap_id], int(b) - BIN_LO] = int(c)
        return cls(ap_ids, locs, counts, float(data["spacing"]), data.get("metadata", {}))


def save_fingerprint(fp: Fingerprint, path: str | Path) -> None:
    Path(path).write_text(json.dumps(fp.to_dict(), sort_keys=True) + "\n")


def load_fingerprint(path: str | Path) -> Fingerprint:
    return Fingerprint.from_dict(json.loads(Path(path).read_text()))


def rss_bin(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values), BIN_LO, BIN_HI).astype(np.int64) - BIN_LO


def build_fingerprint(trace: Trace, spacing: float, metadata: Mapping[str, object] | None = None) -> Fingerprint:
    """Per-location, per-AP 1 dB histograms from a survey trace taken at the
    fingerprint lattice."""
    n = len(trace.ap_ids)
    counts = np.zeros((len(trace.points), n, N_BINS), dtype=np.int64)
    keep = []
    for k in range(len(trace.points)):
        block = trace.rss[k]
        if np.all(np.isnan(block)):
            log.warning("fingerprint location %d (%s) has no samples, excluded", k, trace.points[k].tolist())
            continue
        keep.append(k)
        for a in range(n):
            col = block[:, a]
            col = col[~np.isnan(col)]
            if len(col):
                counts[k, a] = np.bincount(rss_bin(col), minlength=N_BINS)
    keep_arr = np.array(keep, dtype=np.int64)
    return Fingerprint(trace.ap_ids, trace.points[keep_arr].copy(), counts[keep_arr], float(spacing),
                       dict(metadata or {}))


class FingerprintLocator:
    """Maximum-likelihood lookup with per-AP independence.

    An AP heard at query time contributes the probability of the query's
    filtered RSS bin (floored). An AP the fingerprint knows at a location but
    the query did not hear contributes the floor.
    """

    def __init__(self, fp: Fingerprint, floor: float = FLOOR_PROBABILITY):
        self.fp = fp
        self.floor = floor
        self._logp = np.log(np.maximum(fp.probabilities(), floor))
        self._absent = np.where(fp.heard_counts > 0, np.log(floor), 0.0)  # (L, n)
        self._index = {a: i for i, a in enumerate(fp.ap_ids)}

    def log_likelihood(self, window: ScanWindow) -> np.ndarray:
        heard = [(self._index[k], float(np.mean(v))) for k, v in window.samples.items() if k in self._index]
        if not heard:
            raise EmptyScanError("no overlap between heard APs and the fingerprint")
        idx = np.array([a for a, _ in heard])
        bins = rss_bin(np.array([v for _, v in heard]))
        ll = self._logp[:, idx, bins].sum(axis=1)
        missing = np.ones(len(self.fp.ap_ids), dtype=bool)
        missing[idx] = False
        return ll + self._absent[:, missing].sum(axis=1)

    def locate_index(self, window: ScanWindow) -> int:
        return int(np.argmax(self.log_likelihood(window)))

    def locate(self, window: ScanWindow) -> Point2D:
        x, y = self.fp.locations[self.locate_index(window)]
        return Point2D(float(x), float(y))


def fingerprint_locate(window: ScanWindow, fp: Fingerprint, floor: float = FLOOR_PROBABILITY) -> Point2D:
    return FingerprintLocator(fp, floor).locate(window)


@dataclass(frozen=True)
class CentroidConfig:
    weight_exponent: float = 1.0

    def __post_init__(self) -> None:
        if self.weight_exponent < 0:
            raise ValueError("weight exponent must be >= 0")


def centroid_locate(window: ScanWindow, plan: Floorplan, cfg: CentroidConfig = CentroidConfig()) -> Point2D:
    norm = normalize_power(window, plan)
    if not norm.samples:
        raise EmptyScanError("empty scan")
    index = {ap.id: i for i, ap in enumerate(plan.aps)}
    ids = list(norm.samples)
    rss = np.array([np.mean(norm.samples[k]) for k in ids])
    # linear power ** g, rescaled by the strongest AP so nothing underflows
    weights = 10.0 ** ((rss - rss.max()) / 10.0 * cfg.weight_exponent)
    pos = plan.ap_positions()[[index[k] for k in ids]]
    x, y = (weights[:, None] * pos).sum(axis=0) / weights.sum()
    return Point2D(float(x), float(y))
