"""Synthetic scan traces from a log-distance channel with wall loss and
Gaussian shadowing.

Each test point gets its own PCG64 stream seeded from
``SeedSequence([seed, stream, point_index])``, and the noise draw for a point
is always a full ``(rounds, n_aps)`` block whether or not a sample ends up
heard. Two configs that differ only in device offsets, transmit powers or
detection threshold therefore see the same noise realisation.

Detection is decided on the channel value (mean + shadowing + per-AP drift).
The device gain offset is a reporting offset of the receiver and is added
after detection. Reported values saturate at 0 dBm.
"""

from __future__ import annotations

import bisect
import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .floorplan import (
    AccessPoint,
    Floorplan,
    count_walls,
    floorplan_from_dict,
    load_floorplan,
    reference_testbed,
    wall_count_matrix,
)
from .geometry import Point2D
from .gridder import lattice
from .localizer import ScanSample

MIN_DISTANCE_M = 0.1
RSS_CEILING_DBM = 0.0
RSS_FLOOR_DBM = -120.0


@dataclass(frozen=True)
class PropagationModel:
    path_loss_exponent: float = 3.0
    reference_loss_db: float = 40.0
    shadowing_sigma: float = 4.0
    wall_loss_db: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.path_loss_exponent > 0:
            raise ValueError("path-loss exponent must be positive")
        if self.shadowing_sigma < 0 or self.wall_loss_db < 0:
            raise ValueError("shadowing sigma and wall loss must be non-negative")


@dataclass(frozen=True)
class DeviceProfile:
    gain_offset_db: float = 0.0
    per_ap_bias_db: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioConfig:
    plan: Floorplan
    model: PropagationModel = field(default_factory=PropagationModel)
    device: DeviceProfile = field(default_factory=DeviceProfile)
    test_points: tuple[Point2D, ...] | None = None
    test_spacing: float = 1.0
    samples_per_point: int = 12
    detection_threshold_dbm: float = -100.0
    stream: int = 0
    scan_period_ms: int = 1000

    def __post_init__(self) -> None:
        if self.samples_per_point < 1:
            raise ValueError("samples_per_point must be >= 1")

    def points(self) -> np.ndarray:
        if self.test_points is not None:
            pts = np.array([(p.x, p.y) for p in self.test_points], dtype=float).reshape(-1, 2)
        else:
            pts, _, _ = lattice(self.plan.width, self.plan.height, self.test_spacing)
        for k, (x, y) in enumerate(pts):
            if not self.plan.contains(Point2D(float(x), float(y))):
                raise ValueError(f"test point {k} ({x}, {y}) outside bounds")
        return pts


def mean_rss(p: Point2D, ap: AccessPoint, model: PropagationModel, plan: Floorplan) -> float:
    d = max(p.distance(ap.position), MIN_DISTANCE_M)
    walls = count_walls(p, ap, plan)
    return ap.tx_power_dbm - model.reference_loss_db - 10 * model.path_loss_exponent * np.log10(d) - walls * model.wall_loss_db


def mean_rss_matrix(points: np.ndarray, plan: Floorplan, model: PropagationModel) -> np.ndarray:
    """(P, n) noiseless RSS from every AP at every point."""
    delta = points[:, None, :] - plan.ap_positions()[None, :, :]
    d = np.maximum(np.hypot(delta[..., 0], delta[..., 1]), MIN_DISTANCE_M)
    walls = wall_count_matrix(points, plan)
    return (plan.tx_powers()[None, :] - model.reference_loss_db
            - 10 * model.path_loss_exponent * np.log10(d) - walls * model.wall_loss_db)


def point_rng(seed: int, stream: int, point_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream, point_index])))


@dataclass(frozen=True, eq=False)
class Trace:
    """Simulated scans: ``rss[k, r, a]`` is AP ``a``'s reading at point ``k``
    in round ``r`` (NaN when not heard)."""

    ap_ids: tuple[str, ...]
    points: np.ndarray
    rss: np.ndarray
    scan_period_ms: int = 1000

    @property
    def rounds_per_point(self) -> int:
        return self.rss.shape[1]

    def timestamp(self, k: int, r: int) -> int:
        return (k * self.rounds_per_point + r) * self.scan_period_ms

    def scans(self, k: int) -> list[dict[str, float]]:
        out = []
        for r in range(self.rounds_per_point):
            row = self.rss[k, r]
            out.append({self.ap_ids[a]: float(row[a]) for a in np.flatnonzero(~np.isnan(row))})
        return out

    def rows(self) -> Iterator[tuple[int, str, float]]:
        for k in range(len(self.points)):
            for r in range(self.rounds_per_point):
                ts = self.timestamp(k, r)
                for a in np.flatnonzero(~np.isnan(self.rss[k, r])):
                    yield ts, self.ap_ids[a], float(self.rss[k, r, a])


def generate_trace(cfg: ScenarioConfig) -> Trace:
    plan, model, device = cfg.plan, cfg.model, cfg.device
    pts = cfg.points()
    mean = mean_rss_matrix(pts, plan, model)
    bias = np.array([device.per_ap_bias_db.get(ap_id, 0.0) for ap_id in plan.ap_ids])
    rounds, n = cfg.samples_per_point, plan.n_aps
    rss = np.empty((len(pts), rounds, n))
    for k in range(len(pts)):
        noise = point_rng(model.seed, cfg.stream, k).standard_normal((rounds, n))
        channel = mean[k][None, :] + model.shadowing_sigma * noise + bias[None, :]
        reported = np.clip(channel + device.gain_offset_db, RSS_FLOOR_DBM, RSS_CEILING_DBM)
        rss[k] = np.where(channel >= cfg.detection_threshold_dbm, reported, np.nan)
    return Trace(plan.ap_ids, pts, rss, cfg.scan_period_ms)


# -- files ---------------------------------------------------------------------

TRACE_HEADER = ["timestamp_ms", "ap_id", "rss_dbm"]
TRUTH_HEADER = ["point_index", "x", "y", "start_ms", "end_ms"]


def write_trace(trace: Trace, trace_path: str | Path, truth_path: str | Path | None = None) -> None:
    with open(trace_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for ts, ap_id, v in trace.rows():
            w.writerow([ts, ap_id, repr(v)])
    if truth_path is not None:
        with open(truth_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRUTH_HEADER)
            end_offset = (trace.rounds_per_point - 1) * trace.scan_period_ms
            for k, (x, y) in enumerate(trace.points):
                start = trace.timestamp(k, 0)
                w.writerow([k, repr(float(x)), repr(float(y)), start, start + end_offset])


def read_scans(trace_path: str | Path) -> list[tuple[int, dict[str, float]]]:
    """Scan rounds grouped by timestamp, in file order."""
    rounds: dict[int, dict[str, float]] = {}
    with open(trace_path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{trace_path}: missing columns {sorted(missing)}")
        for row in reader:
            s = ScanSample(row["ap_id"], float(row["rss_dbm"]))
            rounds.setdefault(int(row["timestamp_ms"]), {})[s.ap_id] = s.rss_dbm
    return list(rounds.items())


def read_truth(path: str | Path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            entry = {"point_index": int(row["point_index"]), "x": float(row["x"]), "y": float(row["y"])}
            if row.get("start_ms") not in (None, ""):
                entry["start_ms"] = int(row["start_ms"])
                entry["end_ms"] = int(row["end_ms"])
            out.append(entry)
    return out


def trace_from_files(trace_path: str | Path, truth_path: str | Path, ap_ids: Sequence[str]) -> Trace:
    """Rebuild an in-memory trace from the CSV pair written by :func:`write_trace`."""
    truth = read_truth(truth_path)
    scans = read_scans(trace_path)
    if any("start_ms" not in t for t in truth):
        raise ValueError("ground-truth sidecar needs start_ms/end_ms to segment the trace")
    index = {a: i for i, a in enumerate(ap_ids)}
    by_point: list[list[dict[str, float]]] = [[] for _ in truth]
    order = sorted(range(len(truth)), key=lambda k: truth[k]["start_ms"])
    starts = [truth[k]["start_ms"] for k in order]
    for ts, scan in scans:
        pos = bisect.bisect_right(starts, ts) - 1
        if pos >= 0 and ts <= truth[order[pos]]["end_ms"]:
            by_point[order[pos]].append(scan)
    rounds = max((len(s) for s in by_point), default=0)
    rss = np.full((len(truth), rounds, len(ap_ids)), np.nan)
    for k, point_scans in enumerate(by_point):
        for r, scan in enumerate(point_scans):
            for ap_id, v in scan.items():
                if ap_id in index:
                    rss[k, r, index[ap_id]] = v
    pts = np.array([(t["x"], t["y"]) for t in truth], dtype=float).reshape(-1, 2)
    period = 1000
    if len(scans) > 1:
        period = max(1, scans[1][0] - scans[0][0])
    return Trace(tuple(ap_ids), pts, rss, period)


def scenario_from_dict(data: dict, base_dir: str | Path = ".") -> ScenarioConfig:
    plan_entry = data["floorplan"]
    if isinstance(plan_entry, str):
        if plan_entry == "reference":
            plan = reference_testbed()
        else:
            plan = load_floorplan(Path(base_dir) / plan_entry)
    else:
        plan = floorplan_from_dict(plan_entry)
    model = PropagationModel(**data.get("model", {}))
    dev = data.get("device", {})
    device = DeviceProfile(float(dev.get("gain_offset_db", 0.0)),
                           {str(k): float(v) for k, v in dev.get("per_ap_bias_db", {}).items()})
    tp = data.get("test_points", {"spacing": 1.0})
    points, spacing = None, 1.0
    if isinstance(tp, dict):
        spacing = float(tp.get("spacing", 1.0))
    else:
        points = tuple(Point2D(float(x), float(y)) for x, y in tp)
    return ScenarioConfig(
        plan=plan, model=model, device=device, test_points=points, test_spacing=spacing,
        samples_per_point=int(data.get("samples_per_point", 12)),
        detection_threshold_dbm=float(data.get("detection_threshold_dbm", -100.0)),
        stream=int(data.get("stream", 0)),
        scan_period_ms=int(data.get("scan_period_ms", 1000)),
    )


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    return scenario_from_dict(json.loads(path.read_text()), path.parent)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "floorplan": cfg.plan.to_dict(),
        "model": {
            "path_loss_exponent": cfg.model.path_loss_exponent,
            "reference_loss_db": cfg.model.reference_loss_db,
            "shadowing_sigma": cfg.model.shadowing_sigma,
            "wall_loss_db": cfg.model.wall_loss_db,
            "seed": cfg.model.seed,
        },
        "device": {"gain_offset_db": cfg.device.gain_offset_db,
                   "per_ap_bias_db": dict(sorted(cfg.device.per_ap_bias_db.items()))},
        "test_points": ({"spacing": cfg.test_spacing} if cfg.test_points is None
                        else [[p.x, p.y] for p in cfg.test_points]),
        "samples_per_point": cfg.samples_per_point,
        "detection_threshold_dbm": cfg.detection_threshold_dbm,
        "stream": cfg.stream,
        "scan_period_ms": cfg.scan_period_ms,
    }


def with_seed(cfg: ScenarioConfig, seed: int, stream: int | None = None) -> ScenarioConfig:
    out = replace(cfg, model=replace(cfg.model, seed=seed))
    if stream is not None:
        out = replace(out, stream=stream)
    return out
