"""Shared bits for the experiment scripts."""

import argparse
import csv
import sys
from pathlib import Path

from incvoronoi import evaluation as ev
from incvoronoi.floorplan import reference_testbed
from incvoronoi.simulator import ScenarioConfig


def parser(description, default_out):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seeds", type=int, default=20, help="number of RNG seeds (default 20)")
    p.add_argument("--out", type=Path, default=Path("results") / default_out)
    return p


def base_spec(seeds, **kw):
    return ev.ExperimentSpec(ScenarioConfig(reference_testbed()), seeds=tuple(range(seeds)), **kw)


def write_rows(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path}", file=sys.stderr)


def report_rows(result, extra=()):
    for r in result.reports:
        pc = r.percentiles
        yield [*extra, r.system, r.setting["value"], f"{r.median_of_medians:.4f}", f"{min(r.seed_medians):.4f}",
               f"{max(r.seed_medians):.4f}", f"{pc['p25']:.4f}", f"{pc['p50']:.4f}", f"{pc['p75']:.4f}",
               f"{r.runtime_ms:.4f}"]


REPORT_HEADER = ["system", "value", "median_of_medians_m", "median_min_m", "median_max_m",
                 "p25_m", "p50_m", "p75_m", "ms_per_estimate"]
