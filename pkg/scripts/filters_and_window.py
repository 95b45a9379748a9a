"""Median error for each window filter as the pre-processing window w grows."""

from dataclasses import replace

from incvoronoi import evaluation as ev
from incvoronoi.localizer import Filter, TrackerConfig

from _common import REPORT_HEADER, base_spec, parser, report_rows, write_rows


def main():
    p = parser(__doc__, "filters_and_window.csv")
    p.add_argument("--w", type=int, nargs="+", default=list(range(1, 10)))
    args = p.parse_args()
    rows = []
    for kind in Filter:
        spec = base_spec(args.seeds, tracker=TrackerConfig(filter=kind), sweep=ev.Sweep("w", tuple(args.w)))
        res = ev.run_experiment(spec)
        rows += list(report_rows(res, [kind.value]))
        for r in res.reports:
            print(f"{kind.value:6s} w={r.setting['value']}: {r.median_of_medians:.3f} m")
    write_rows(args.out, ["filter", *REPORT_HEADER], rows)


if __name__ == "__main__":
    main()
