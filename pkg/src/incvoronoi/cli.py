"""Command-line interface.

    incvoronoi simulate   --out trace.csv --truth truth.csv [--scenario s.json] [--seed N]
    incvoronoi grid       --grid-spacing 0.5 --out grid.npz [--floorplan plan.json]
    incvoronoi localize   --trace trace.csv [--truth truth.csv] --out estimates.csv
    incvoronoi fingerprint build  --trace survey.csv --truth survey_truth.csv --out fp.json
    incvoronoi fingerprint locate --fingerprint fp.json --trace trace.csv --out estimates.csv
    incvoronoi centroid locate    --trace trace.csv --out estimates.csv
    incvoronoi evaluate   [--spec exp.json] --out results/ [--check]
    incvoronoi compare    [--spec exp.json] --out results/ [--check]

Floorplans default to the bundled reference testbed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from collections import deque
from dataclasses import replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

from . import evaluation as ev
from .baselines import (CentroidConfig, FingerprintLocator, build_fingerprint, centroid_locate, load_fingerprint,
                        save_fingerprint)
from .floorplan import Floorplan, load_floorplan, reference_testbed
from .geometry import Point2D
from .gridder import build_grid, build_grid_cached, load_grid, save_grid
from .localizer import EmptyScanError, Filter, ScanWindow, TrackerConfig, locate_window, smooth_track
from .simulator import (ScenarioConfig, generate_trace, load_scenario, read_scans, read_truth, trace_from_files,
                        with_seed, write_trace)

log = logging.getLogger("incvoronoi")

ESTIMATE_HEADER = ["timestamp_ms", "x", "y", "raw_x", "raw_y"]
TRACKER_COLUMNS = ["max_matches", "candidates"]
TRUTH_COLUMNS = ["point_index", "true_x", "true_y", "error_m"]


def _plan(path: str | None) -> Floorplan:
    return reference_testbed() if path is None else load_floorplan(path)


def _tracker_cfg(args, base: TrackerConfig | None = None) -> TrackerConfig:
    base = base or TrackerConfig()
    changes = {}
    if args.window_w is not None:
        changes["w"] = args.window_w
    if args.window_t is not None:
        changes["t"] = args.window_t
    if args.filter is not None:
        changes["filter"] = Filter(args.filter)
    if args.wall_c is not None:
        changes["wall_c"] = args.wall_c
    return replace(base, **changes)


def _add_tracker_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("tracker")
    g.add_argument("--window-w", type=int, help="pre-processing window, scan rounds (default 7)")
    g.add_argument("--window-t", type=int, help="post-smoothing window, estimates (default 6)")
    g.add_argument("--filter", choices=[f.value for f in Filter], help="window filter (default prob)")
    g.add_argument("--wall-c", type=float, help="wall attenuation factor in dB per wall (default 5)")


# -- streaming over a trace --------------------------------------------------------


def _rounds(trace_path: str, truth_path: str | None):
    """Yield (timestamp, truth segment or None, scan, starts_new_segment)."""
    scans = read_scans(trace_path)
    truth = read_truth(truth_path) if truth_path else []
    segments = sorted((t for t in truth if "start_ms" in t), key=lambda t: t["start_ms"])
    current = None
    for ts, scan in scans:
        seg = None
        for t in segments:  # traces are small; a linear scan keeps this readable
            if t["start_ms"] <= ts <= t["end_ms"]:
                seg = t
                break
        new = seg is not current
        current = seg
        yield ts, seg, scan, new


def _stream(args, locate: Callable[[ScanWindow], tuple[Point2D, list]], w: int, t: int,
            n_extra: int = 0) -> Iterator[list]:
    """One output row per scan round. ``locate`` returns the raw position and
    any extra per-estimate columns."""
    window: deque = deque(maxlen=w)
    history: deque = deque(maxlen=t)
    for ts, seg, scan, new in _rounds(args.trace, args.truth):
        if new:
            window.clear()
            history.clear()
        window.append(scan)
        samples: dict[str, list[float]] = {}
        for s in window:
            for ap_id, v in s.items():
                samples.setdefault(ap_id, []).append(v)
        try:
            raw, extra = locate(ScanWindow.from_lists(samples, w))
        except EmptyScanError:
            row = [ts] + [""] * (4 + n_extra)
            p = None
        else:
            history.append(raw)
            p = smooth_track(history)
            row = [ts, f"{p.x:.6f}", f"{p.y:.6f}", f"{raw.x:.6f}", f"{raw.y:.6f}"] + extra
        if args.truth:
            if seg is None:
                row += ["", "", "", ""]
            else:
                err = "" if p is None else f"{math.hypot(p.x - seg['x'], p.y - seg['y']):.6f}"
                row += [seg["point_index"], seg["x"], seg["y"], err]
        yield row


def _header(args, extra: Sequence[str] = ()) -> list[str]:
    return ESTIMATE_HEADER + list(extra) + (TRUTH_COLUMNS if args.truth else [])


def _write_rows(path: str | None, header: Sequence[str], rows) -> int:
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    n = 0
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)
            n += 1
    finally:
        if fh is not sys.stdout:
            fh.close()
    return n


# -- subcommands ---------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = load_scenario(args.scenario) if args.scenario else ScenarioConfig(reference_testbed())
    if args.floorplan:
        cfg = replace(cfg, plan=load_floorplan(args.floorplan))
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    if args.samples is not None:
        cfg = replace(cfg, samples_per_point=args.samples)
    if args.test_spacing is not None:
        cfg = replace(cfg, test_spacing=args.test_spacing, test_points=None)
    if args.stream is not None:
        cfg = replace(cfg, stream=args.stream)
    trace = generate_trace(cfg)
    write_trace(trace, args.out, args.truth)
    log.info("wrote %d points x %d rounds to %s", len(trace.points), trace.rounds_per_point, args.out)
    return 0


def cmd_grid(args) -> int:
    plan = _plan(args.floorplan)
    grid = build_grid(plan, args.grid_spacing)
    save_grid(grid, args.out)
    log.info("grid %dx%d (%d points) written to %s", grid.nx, grid.ny, len(grid), args.out)
    return 0


def cmd_localize(args) -> int:
    plan = _plan(args.floorplan)
    if args.grid:
        grid = load_grid(args.grid)
    elif args.cache_dir:
        grid = build_grid_cached(plan, args.grid_spacing, args.cache_dir)
    else:
        grid = build_grid(plan, args.grid_spacing)
    cfg = _tracker_cfg(args)

    def locate(win: ScanWindow):
        est = locate_window(win, grid, plan, cfg)
        return est.position, [est.max_matches, est.candidate_count]

    n = _write_rows(args.out, _header(args, TRACKER_COLUMNS), _stream(args, locate, cfg.w, cfg.t, 2))
    log.info("%d estimates", n)
    return 0


def cmd_fingerprint_build(args) -> int:
    ap_ids = _plan(args.floorplan).ap_ids
    trace = trace_from_files(args.trace, args.truth, ap_ids)
    fp = build_fingerprint(trace, args.spacing, {"source": Path(args.trace).name, "device": args.device})
    save_fingerprint(fp, args.out)
    log.info("fingerprint with %d locations written to %s", len(fp.locations), args.out)
    return 0


def cmd_fingerprint_locate(args) -> int:
    locator = FingerprintLocator(load_fingerprint(args.fingerprint))
    w = args.window_w or 7
    t = args.window_t or 1
    n = _write_rows(args.out, _header(args), _stream(args, lambda win: (locator.locate(win), []), w, t))
    log.info("%d estimates", n)
    return 0


def cmd_centroid_locate(args) -> int:
    plan = _plan(args.floorplan)
    cc = CentroidConfig(args.weight_exponent)
    w = args.window_w or 7
    t = args.window_t or 1
    n = _write_rows(args.out, _header(args), _stream(args, lambda win: (centroid_locate(win, plan, cc), []), w, t))
    log.info("%d estimates", n)
    return 0


def _experiment_spec(args) -> ev.ExperimentSpec:
    if args.spec:
        spec = ev.load_spec(args.spec)
    else:
        spec = ev.ExperimentSpec(ScenarioConfig(reference_testbed()))
    changes: dict = {"tracker": _tracker_cfg(args, spec.tracker)}
    if args.grid_spacing is not None:
        changes["grid_spacing"] = args.grid_spacing
    if args.seeds is not None or args.seed is not None:
        start = spec.seeds[0] if args.seed is None else args.seed
        count = len(spec.seeds) if args.seeds is None else args.seeds
        changes["seeds"] = tuple(range(start, start + count))
    if getattr(args, "systems", None):
        changes["systems"] = tuple(args.systems)
    if getattr(args, "sweep", None):
        name, _, values = args.sweep.partition("=")
        parsed = []
        for v in values.split(","):
            try:
                parsed.append(json.loads(v))
            except json.JSONDecodeError:
                parsed.append(v)
        changes["sweep"] = ev.Sweep(name, tuple(parsed))
    if getattr(args, "band", None):
        changes["median_band"] = tuple(args.band)
    return replace(spec, **changes)


def cmd_evaluate(args) -> int:
    spec = _experiment_spec(args)
    result = ev.run_experiment(spec)
    for path in ev.write_experiment(result, args.out):
        log.info("wrote %s", path)
    for r in result.reports:
        pc = r.percentiles
        label = "default" if r.setting["parameter"] is None else f"{r.setting['parameter']}={r.setting['value']}"
        print(f"{r.system:12s} {label:10s}  "
              f"median-of-medians {r.median_of_medians:.3f} m  p25/p50/p75 "
              f"{pc['p25']:.2f}/{pc['p50']:.2f}/{pc['p75']:.2f} m  {r.runtime_ms:.2f} ms/estimate")
    if args.check:
        band = spec.median_band or (1.5, 4.5)
        bad = ev.band_violations(result, band)
        for msg in bad:
            print(f"BAND VIOLATION: {msg}", file=sys.stderr)
        return 1 if bad else 0
    return 0


def cmd_compare(args) -> int:
    spec = _experiment_spec(args)
    cmp = ev.compare_systems(spec)
    for path in ev.write_comparison(cmp, spec, args.out):
        log.info("wrote %s", path)
    conds = list(cmp.rows["incvoronoi"])
    print("system       " + "  ".join(f"{c:>22s}" for c in conds))
    for system, cols in cmp.rows.items():
        cells = [f"{cols['baseline']:.2f} m".rjust(22)]
        cells += [f"{cols[c]:.2f} m ({cmp.degradation_pct(system, c):+.1f}%)".rjust(22) for c in conds[1:]]
        print(f"{system:12s} " + "  ".join(cells))
    if args.check:
        bad = ev.comparison_violations(cmp)
        for msg in bad:
            print(f"BAND VIOLATION: {msg}", file=sys.stderr)
        return 1 if bad else 0
    return 0


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="incvoronoi", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a scan trace and ground-truth sidecar")
    p.add_argument("--scenario", help="scenario JSON (default: reference testbed, default channel)")
    p.add_argument("--floorplan", help="floorplan JSON overriding the scenario's")
    p.add_argument("--seed", type=int)
    p.add_argument("--stream", type=int, help="RNG stream (0 test, 1 survey)")
    p.add_argument("--samples", type=int, help="scan rounds per test point")
    p.add_argument("--test-spacing", type=float, help="test lattice spacing in m")
    p.add_argument("--out", required=True, help="trace CSV")
    p.add_argument("--truth", help="ground-truth CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grid", help="precompute a virtual grid")
    p.add_argument("--floorplan")
    p.add_argument("--grid-spacing", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("localize", help="run the tracker over a scan trace")
    p.add_argument("--floorplan")
    p.add_argument("--grid", help="precomputed grid .npz")
    p.add_argument("--grid-spacing", type=float, default=0.5)
    p.add_argument("--cache-dir", help="reuse grids across runs")
    p.add_argument("--trace", required=True)
    p.add_argument("--truth", help="ground truth; resets the tracker per test point and adds errors")
    p.add_argument("--out", help="estimates CSV (default stdout)")
    _add_tracker_flags(p)
    p.set_defaults(func=cmd_localize)

    fp = sub.add_parser("fingerprint", help="fingerprinting baseline").add_subparsers(dest="action", required=True)
    p = fp.add_parser("build", help="build a fingerprint from a survey trace")
    p.add_argument("--floorplan")
    p.add_argument("--trace", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--spacing", type=float, default=2.0)
    p.add_argument("--device", default="survey", help="label stored in the fingerprint metadata")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fingerprint_build)
    p = fp.add_parser("locate", help="locate scans against a fingerprint")
    p.add_argument("--fingerprint", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--truth")
    p.add_argument("--window-w", type=int)
    p.add_argument("--window-t", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fingerprint_locate)

    cen = sub.add_parser("centroid", help="weighted-centroid baseline").add_subparsers(dest="action", required=True)
    p = cen.add_parser("locate")
    p.add_argument("--floorplan")
    p.add_argument("--trace", required=True)
    p.add_argument("--truth")
    p.add_argument("--weight-exponent", type=float, default=1.0)
    p.add_argument("--window-w", type=int)
    p.add_argument("--window-t", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_centroid_locate)

    for name, func, helptext in (("evaluate", cmd_evaluate, "run an experiment and write reports"),
                                 ("compare", cmd_compare, "operational-change comparison of all systems")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--spec", help="experiment JSON (default: reference testbed, 20 seeds)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--grid-spacing", type=float)
        p.add_argument("--seed", type=int, help="first seed")
        p.add_argument("--seeds", type=int, help="number of seeds")
        p.add_argument("--check", action="store_true", help="exit 1 on acceptance-band violations")
        _add_tracker_flags(p)
        if name == "evaluate":
            p.add_argument("--systems", nargs="+", choices=ev.SYSTEMS)
            p.add_argument("--sweep", help="knob=v1,v2,... e.g. C=0,5,10")
            p.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"),
                           help="median band for --check (default 1.5 4.5)")
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args) or 0)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
