"""Experiment harness: simulate, localize with each system, collect errors.

Each (setting, seed) run works like this:

* a test trace on the 1 m lattice, drawn from the query scenario with any
  operational perturbation applied (device gain offset, transmit-power
  change, per-AP drift);
* a survey trace on the fingerprint lattice, drawn from the unperturbed
  scenario on its own RNG stream, used only by the fingerprinting baseline.

Every system sees the same windows: for each test point the last ``t``
rounds are localized, each from its trailing ``w``-round window, and the
``t`` raw estimates are averaged. The error of a test point is the distance
from that smoothed estimate to the truth.

Percentiles use the nearest-rank definition throughout.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .baselines import CentroidConfig, FingerprintLocator, build_fingerprint, centroid_locate
from .floorplan import Floorplan, thin_aps
from .geometry import Point2D
from .gridder import VirtualGrid, build_grid
from .localizer import EmptyScanError, Filter, ScanWindow, TrackerConfig, locate_window
from .simulator import DeviceProfile, ScenarioConfig, Trace, generate_trace, point_rng, scenario_from_dict, scenario_to_dict

SYSTEMS = ("incvoronoi", "fingerprint", "centroid")
KNOBS = ("w", "t", "C", "filter", "grid_spacing", "beacon_count", "device_offset",
         "tx_delta", "sigma", "ap_bias_sigma", "wall_loss")
TRAINING_STREAM = 1
DRIFT_STREAM = 2


class ExperimentError(ValueError):
    pass


def nearest_rank(values: Sequence[float], p: float) -> float:
    if len(values) == 0:
        raise ValueError("no values")
    if not 0 < p <= 100:
        raise ValueError("percentile must be in (0, 100]")
    ordered = np.sort(np.asarray(values, dtype=float))
    rank = max(1, math.ceil(p / 100.0 * len(ordered)))
    return float(ordered[rank - 1])


@dataclass(frozen=True)
class Perturbation:
    """Operational change applied to the query side only."""

    device_offset_db: float = 0.0
    tx_delta_db: float = 0.0
    ap_bias_sigma_db: float = 0.0


@dataclass(frozen=True)
class Sweep:
    parameter: str
    values: tuple

    def __post_init__(self) -> None:
        if self.parameter not in KNOBS:
            raise ExperimentError(f"unknown sweep parameter {self.parameter!r}; expected one of {', '.join(KNOBS)}")
        if len(self.values) == 0:
            raise ExperimentError("sweep needs at least one value")


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioConfig
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    grid_spacing: float = 0.5
    systems: tuple[str, ...] = ("incvoronoi",)
    sweep: Sweep | None = None
    seeds: tuple[int, ...] = tuple(range(20))
    perturbation: Perturbation = field(default_factory=Perturbation)
    fingerprint_spacing: float = 2.0
    fingerprint_samples: int = 100
    centroid: CentroidConfig = field(default_factory=CentroidConfig)
    median_band: tuple[float, float] | None = None
    name: str = "experiment"

    def __post_init__(self) -> None:
        for s in self.systems:
            if s not in SYSTEMS:
                raise ExperimentError(f"unknown system {s!r}")
        if len(self.seeds) == 0:
            raise ExperimentError("need at least one seed")


@dataclass
class ErrorReport:
    system: str
    setting: dict
    errors: np.ndarray  # pooled per-point errors, seed-major
    seed_medians: list[float]
    failures: int
    runtime_ms: float

    @property
    def cdf(self) -> np.ndarray:
        return np.sort(self.errors)

    @property
    def percentiles(self) -> dict[str, float]:
        return {f"p{p}": nearest_rank(self.errors, p) for p in (25, 50, 75)}

    @property
    def median_of_medians(self) -> float:
        return nearest_rank(self.seed_medians, 50)

    def summary(self) -> dict:
        return {
            "system": self.system,
            "setting": self.setting,
            "percentiles": self.percentiles,
            "median_of_medians": self.median_of_medians,
            "median_min": min(self.seed_medians),
            "median_max": max(self.seed_medians),
            "seed_medians": self.seed_medians,
            "n_errors": int(len(self.errors)),
            "failures": self.failures,
        }


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    reports: list[ErrorReport]

    def report(self, system: str, value=None) -> ErrorReport:
        for r in self.reports:
            if r.system == system and r.setting.get("value") == value:
                return r
        raise KeyError((system, value))


# -- setting resolution --------------------------------------------------------


@dataclass(frozen=True)
class _Setting:
    scenario: ScenarioConfig
    tracker: TrackerConfig
    grid_spacing: float
    perturbation: Perturbation


def _resolve(spec: ExperimentSpec, parameter: str | None, value) -> _Setting:
    sc, tr, gs, pert = spec.scenario, spec.tracker, spec.grid_spacing, spec.perturbation
    if parameter is None:
        pass
    elif parameter == "w":
        tr = replace(tr, w=int(value))
    elif parameter == "t":
        tr = replace(tr, t=int(value))
    elif parameter == "C":
        tr = replace(tr, wall_c=float(value))
    elif parameter == "filter":
        tr = replace(tr, filter=Filter(value))
    elif parameter == "grid_spacing":
        gs = float(value)
    elif parameter == "beacon_count":
        sc = replace(sc, plan=thin_aps(sc.plan, int(value)))
    elif parameter == "device_offset":
        pert = replace(pert, device_offset_db=float(value))
    elif parameter == "tx_delta":
        pert = replace(pert, tx_delta_db=float(value))
    elif parameter == "sigma":
        sc = replace(sc, model=replace(sc.model, shadowing_sigma=float(value)))
    elif parameter == "ap_bias_sigma":
        pert = replace(pert, ap_bias_sigma_db=float(value))
    elif parameter == "wall_loss":
        sc = replace(sc, model=replace(sc.model, wall_loss_db=float(value)))
    else:  # pragma: no cover - guarded by Sweep
        raise ExperimentError(parameter)
    return _Setting(sc, tr, gs, pert)


def query_scenario(base: ScenarioConfig, pert: Perturbation, seed: int, rounds: int) -> ScenarioConfig:
    plan = base.plan.with_tx_delta(pert.tx_delta_db) if pert.tx_delta_db else base.plan
    bias = dict(base.device.per_ap_bias_db)
    if pert.ap_bias_sigma_db > 0:
        drift = point_rng(seed, DRIFT_STREAM, 0).normal(0.0, pert.ap_bias_sigma_db, plan.n_aps)
        for ap_id, d in zip(plan.ap_ids, drift):
            bias[ap_id] = bias.get(ap_id, 0.0) + float(d)
    device = DeviceProfile(base.device.gain_offset_db + pert.device_offset_db, bias)
    return replace(base, plan=plan, device=device, model=replace(base.model, seed=seed),
                   samples_per_point=max(base.samples_per_point, rounds), stream=0)


def training_scenario(base: ScenarioConfig, seed: int, spacing: float, samples: int) -> ScenarioConfig:
    return replace(base, model=replace(base.model, seed=seed), test_points=None, test_spacing=spacing,
                   samples_per_point=samples, stream=TRAINING_STREAM)


class _GridCache:
    def __init__(self):
        self._grids: dict[tuple, VirtualGrid] = {}

    def get(self, plan: Floorplan, spacing: float) -> VirtualGrid:
        geometry = json.dumps({"aps": [(a.id, a.position.x, a.position.y) for a in plan.aps],
                               "walls": plan.to_dict()["walls"],
                               "bounds": (plan.width, plan.height)}, sort_keys=True)
        key = (geometry, float(spacing))
        if key not in self._grids:
            self._grids[key] = build_grid(plan, spacing)
        return self._grids[key]


# -- running -------------------------------------------------------------------


def point_windows(trace: Trace, k: int, w: int, t: int) -> list[ScanWindow]:
    """Trailing ``w``-round windows for the last ``t`` rounds at point ``k``."""
    scans = trace.scans(k)
    rounds = len(scans)
    out = []
    for r in range(max(0, rounds - t), rounds):
        samples: dict[str, list[float]] = {}
        for scan in scans[max(0, r - w + 1): r + 1]:
            for ap_id, v in scan.items():
                samples.setdefault(ap_id, []).append(v)
        if samples:
            out.append(ScanWindow({a: np.asarray(v) for a, v in samples.items()}, w))
    return out


Locator = Callable[[ScanWindow], Point2D]


def localize_trace(trace: Trace, locators: dict[str, Locator], w: int, t: int,
                   fallback: Point2D) -> dict[str, tuple[np.ndarray, int, list[float]]]:
    """Per-system (errors, failures, per-call seconds) over every test point."""
    errors = {name: np.empty(len(trace.points)) for name in locators}
    failures = {name: 0 for name in locators}
    timings: dict[str, list[float]] = {name: [] for name in locators}
    for k in range(len(trace.points)):
        windows = point_windows(trace, k, w, t)
        tx, ty = trace.points[k]
        for name, locate in locators.items():
            xs, ys = [], []
            for window in windows:
                t0 = time.perf_counter()
                try:
                    p = locate(window)
                except EmptyScanError:
                    continue
                finally:
                    timings[name].append(time.perf_counter() - t0)
                xs.append(p.x)
                ys.append(p.y)
            if xs:
                ex, ey = math.fsum(xs) / len(xs), math.fsum(ys) / len(ys)
            else:
                failures[name] += 1
                ex, ey = fallback.x, fallback.y
            errors[name][k] = math.hypot(ex - tx, ey - ty)
    return {name: (errors[name], failures[name], timings[name]) for name in locators}


def _run_setting(spec: ExperimentSpec, setting: _Setting, grids: _GridCache) -> dict[str, tuple]:
    tr = setting.tracker
    rounds = tr.w + tr.t - 1
    pooled: dict[str, list] = {s: [[], [], 0, []] for s in spec.systems}
    for seed in spec.seeds:
        q = query_scenario(setting.scenario, setting.perturbation, seed, rounds)
        trace = generate_trace(q)
        locators: dict[str, Locator] = {}
        if "incvoronoi" in spec.systems:
            grid = grids.get(q.plan, setting.grid_spacing)
            locators["incvoronoi"] = lambda win, g=grid, p=q.plan: locate_window(win, g, p, tr).position
        if "fingerprint" in spec.systems:
            train = training_scenario(setting.scenario, seed, spec.fingerprint_spacing, spec.fingerprint_samples)
            fp = build_fingerprint(generate_trace(train), spec.fingerprint_spacing,
                                   {"seed": seed, "device_gain_offset_db": train.device.gain_offset_db,
                                    "tx_power_dbm": list(train.plan.tx_powers())})
            locators["fingerprint"] = FingerprintLocator(fp).locate
        if "centroid" in spec.systems:
            locators["centroid"] = lambda win, p=q.plan: centroid_locate(win, p, spec.centroid)
        centre = Point2D(q.plan.width / 2, q.plan.height / 2)
        out = localize_trace(trace, locators, tr.w, tr.t, centre)
        for name, (errs, fails, secs) in out.items():
            entry = pooled[name]
            entry[0].append(errs)
            entry[1].append(nearest_rank(errs, 50))
            entry[2] += fails
            entry[3].extend(secs)
    return pooled


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    if spec.sweep is not None and spec.sweep.parameter not in KNOBS:
        raise ExperimentError(f"unknown sweep parameter {spec.sweep.parameter!r}")
    values = [None] if spec.sweep is None else list(spec.sweep.values)
    parameter = None if spec.sweep is None else spec.sweep.parameter
    # resolve everything first so a bad value fails before any simulation
    settings = [_resolve(spec, parameter, v) for v in values]
    grids = _GridCache()
    reports = []
    for value, setting in zip(values, settings):
        pooled = _run_setting(spec, setting, grids)
        label = {"parameter": parameter, "value": value}
        for name in spec.systems:
            errs, medians, fails, secs = pooled[name]
            reports.append(ErrorReport(
                system=name, setting=label, errors=np.concatenate(errs), seed_medians=medians,
                failures=fails, runtime_ms=1e3 * float(np.mean(secs)) if secs else float("nan"),
            ))
    return ExperimentResult(spec, reports)


# -- operational-change comparison ----------------------------------------------

CONDITIONS = {
    "baseline": Perturbation(),
    "temporal": Perturbation(ap_bias_sigma_db=4.0),
    "heterogeneous": Perturbation(device_offset_db=10.0),
    "tx_power": Perturbation(tx_delta_db=18.0),
}


@dataclass
class ComparisonResult:
    rows: dict[str, dict[str, float]]  # system -> condition -> median of seed medians
    reports: dict[str, dict[str, ErrorReport]]

    def degradation_pct(self, system: str, condition: str) -> float:
        base = self.rows[system]["baseline"]
        return 100.0 * (self.rows[system][condition] - base) / base

    def table(self) -> list[dict]:
        out = []
        for system, cols in self.rows.items():
            row = {"system": system}
            for cond, v in cols.items():
                row[cond] = v
                if cond != "baseline":
                    row[f"{cond}_degradation_pct"] = self.degradation_pct(system, cond)
            out.append(row)
        return out


def compare_systems(spec: ExperimentSpec, conditions: dict[str, Perturbation] | None = None) -> ComparisonResult:
    conditions = dict(CONDITIONS if conditions is None else conditions)
    if "baseline" not in conditions:
        raise ExperimentError("conditions need a 'baseline' entry")
    base_spec = replace(spec, systems=SYSTEMS, sweep=None)
    rows: dict[str, dict[str, float]] = {s: {} for s in SYSTEMS}
    reports: dict[str, dict[str, ErrorReport]] = {s: {} for s in SYSTEMS}
    for cond, pert in conditions.items():
        res = run_experiment(replace(base_spec, perturbation=pert))
        for r in res.reports:
            rows[r.system][cond] = r.median_of_medians
            reports[r.system][cond] = r
    return ComparisonResult(rows, reports)


def comparison_violations(cmp: ComparisonResult) -> list[str]:
    """Direction-of-effect checks for the operational-change table."""
    out = []
    d = cmp.degradation_pct
    conds = cmp.rows["incvoronoi"]
    if "heterogeneous" in conds:
        if d("incvoronoi", "heterogeneous") != 0.0:
            out.append(f"incvoronoi changes {d('incvoronoi', 'heterogeneous'):.3f}% under device offset (want exactly 0)")
        if d("fingerprint", "heterogeneous") < 50.0:
            out.append(f"fingerprint degrades only {d('fingerprint', 'heterogeneous'):.1f}% under device offset (want >= 50)")
    if "tx_power" in conds:
        for s in ("incvoronoi", "centroid"):
            if d(s, "tx_power") >= 5.0:
                out.append(f"{s} degrades {d(s, 'tx_power'):.1f}% under tx-power change (want < 5)")
        if d("fingerprint", "tx_power") < 50.0:
            out.append(f"fingerprint degrades only {d('fingerprint', 'tx_power'):.1f}% under tx-power change (want >= 50)")
    return out


# -- (de)serialization -----------------------------------------------------------


def spec_from_dict(data: dict, base_dir: str | Path = ".") -> ExperimentSpec:
    scenario = scenario_from_dict(data.get("scenario", {"floorplan": "reference"}), base_dir)
    tr = data.get("tracker", {})
    tracker = TrackerConfig(
        w=int(tr.get("w", 7)), t=int(tr.get("t", 6)), filter=Filter(tr.get("filter", "prob")),
        wall_c=float(tr.get("wall_c", 5.0)),
    )
    sweep = None
    if data.get("sweep"):
        sweep = Sweep(str(data["sweep"]["parameter"]), tuple(data["sweep"]["values"]))
    seeds = data.get("seeds", {"count": 20})
    if isinstance(seeds, dict):
        seeds = tuple(range(int(seeds.get("start", 0)), int(seeds.get("start", 0)) + int(seeds["count"])))
    else:
        seeds = tuple(int(s) for s in seeds)
    pert = Perturbation(**data.get("perturbation", {}))
    fpd = data.get("fingerprint", {})
    band = data.get("check", {}).get("median_band")
    return ExperimentSpec(
        scenario=scenario, tracker=tracker, grid_spacing=float(data.get("grid_spacing", 0.5)),
        systems=tuple(data.get("systems", ["incvoronoi"])), sweep=sweep, seeds=seeds, perturbation=pert,
        fingerprint_spacing=float(fpd.get("spacing", 2.0)),
        fingerprint_samples=int(fpd.get("samples_per_location", 100)),
        centroid=CentroidConfig(float(data.get("centroid", {}).get("weight_exponent", 1.0))),
        median_band=tuple(band) if band else None,
        name=str(data.get("name", "experiment")),
    )


def load_spec(path: str | Path) -> ExperimentSpec:
    path = Path(path)
    return spec_from_dict(json.loads(path.read_text()), path.parent)


def spec_to_dict(spec: ExperimentSpec) -> dict:
    return {
        "name": spec.name,
        "scenario": scenario_to_dict(spec.scenario),
        "tracker": {"w": spec.tracker.w, "t": spec.tracker.t, "filter": spec.tracker.filter.value,
                    "wall_c": spec.tracker.wall_c},
        "grid_spacing": spec.grid_spacing,
        "systems": list(spec.systems),
        "sweep": None if spec.sweep is None else {"parameter": spec.sweep.parameter, "values": list(spec.sweep.values)},
        "seeds": list(spec.seeds),
        "perturbation": asdict(spec.perturbation),
        "fingerprint": {"spacing": spec.fingerprint_spacing, "samples_per_location": spec.fingerprint_samples},
        "centroid": {"weight_exponent": spec.centroid.weight_exponent},
        "check": {"median_band": list(spec.median_band) if spec.median_band else None},
    }


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_experiment(result: ExperimentResult, out_dir: str | Path) -> list[Path]:
    """summary.json and cdf.csv are reproducible byte for byte; wall-clock
    numbers go to timing.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {"spec": spec_to_dict(result.spec), "reports": [r.summary() for r in result.reports]}
    _dump(summary, out_dir / "summary.json")
    with open(out_dir / "cdf.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["system", "parameter", "value", "rank", "error_m", "cdf"])
        for r in result.reports:
            cdf = r.cdf
            for i, e in enumerate(cdf, start=1):
                w.writerow([r.system, r.setting["parameter"] or "", "" if r.setting["value"] is None else r.setting["value"],
                            i, repr(float(e)), repr(i / len(cdf))])
    _dump({"note": "wall-clock, machine dependent",
           "runtime_ms_per_estimate": [{"system": r.system, "setting": r.setting, "mean_ms": r.runtime_ms}
                                       for r in result.reports]}, out_dir / "timing.json")
    return [out_dir / "summary.json", out_dir / "cdf.csv", out_dir / "timing.json"]


def write_comparison(cmp: ComparisonResult, spec: ExperimentSpec, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump({"spec": spec_to_dict(spec), "table": cmp.table(),
           "reports": {s: {c: r.summary() for c, r in conds.items()} for s, conds in cmp.reports.items()}},
          out_dir / "comparison.json")
    conds = list(next(iter(cmp.rows.values())))
    with open(out_dir / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["system"] + [f"{c}_median_m" for c in conds] + [f"{c}_degradation_pct" for c in conds[1:]])
        for system, cols in cmp.rows.items():
            w.writerow([system] + [f"{cols[c]:.6f}" for c in conds]
                       + [f"{cmp.degradation_pct(system, c):.3f}" for c in conds[1:]])
    return [out_dir / "comparison.json", out_dir / "comparison.csv"]


def band_violations(result: ExperimentResult, band: tuple[float, float]) -> list[str]:
    lo, hi = band
    out = []
    for r in result.reports:
        if r.system != "incvoronoi":
            continue
        m = r.median_of_medians
        if not lo <= m <= hi:
            out.append(f"{r.system} {r.setting}: median {m:.3f} m outside [{lo}, {hi}]")
    return out


def runtime_sweep(plan: Floorplan, spacings: Iterable[float], windows: Sequence[ScanWindow],
                  cfg: TrackerConfig, repeats: int = 5) -> dict[float, float]:
    """Best-of-``repeats`` mean milliseconds per estimate for each spacing.

    Spacings are interleaved inside every repeat so that slow drift of the
    machine (frequency scaling, other load) hits all of them alike.
    """
    grids = {float(s): build_grid(plan, s) for s in spacings}
    best = {s: float("inf") for s in grids}
    for _ in range(repeats):
        for s, grid in grids.items():
            t0 = time.perf_counter()
            for win in windows:
                try:
                    locate_window(win, grid, plan, cfg)
                except EmptyScanError:
                    pass
            best[s] = min(best[s], (time.perf_counter() - t0) / len(windows))
    return {s: v * 1e3 for s, v in best.items()}
