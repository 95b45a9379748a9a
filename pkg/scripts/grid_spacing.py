"""Accuracy and online time per estimate against virtual-grid spacing."""

from incvoronoi import evaluation as ev
from incvoronoi.floorplan import reference_testbed
from incvoronoi.localizer import TrackerConfig
from incvoronoi.simulator import ScenarioConfig, generate_trace

from _common import REPORT_HEADER, base_spec, parser, report_rows, write_rows


def main():
    p = parser(__doc__, "grid_spacing.csv")
    p.add_argument("--spacings", type=float, nargs="+", default=[0.25, 0.5, 0.75, 1.0, 1.5, 2.0])
    p.add_argument("--repeats", type=int, default=7)
    args = p.parse_args()
    res = ev.run_experiment(base_spec(args.seeds, sweep=ev.Sweep("grid_spacing", tuple(args.spacings))))

    plan = reference_testbed()
    trace = generate_trace(ScenarioConfig(plan, samples_per_point=7))
    windows = [w for k in range(0, len(trace.points), 3) for w in ev.point_windows(trace, k, 7, 1)]
    timing = ev.runtime_sweep(plan, args.spacings, windows, TrackerConfig(), args.repeats)

    rows = []
    for row, r in zip(report_rows(res), res.reports):
        s = float(r.setting["value"])
        rows.append(row + [f"{timing[s]:.4f}"])
        print(f"{s:4.2f} m grid: {r.median_of_medians:.3f} m, {timing[s]:.3f} ms/estimate (best of {args.repeats})")
    write_rows(args.out, REPORT_HEADER + ["best_ms_per_estimate"], rows)


if __name__ == "__main__":
    main()
