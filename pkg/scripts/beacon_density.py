"""Median error as beacons are removed, spreading the survivors evenly."""

from incvoronoi import evaluation as ev

from _common import REPORT_HEADER, base_spec, parser, report_rows, write_rows

AREA_M2 = 26 * 17


def main():
    p = parser(__doc__, "beacon_density.csv")
    p.add_argument("--counts", type=int, nargs="+", default=[10, 9, 8, 7, 6, 5, 4, 3])
    args = p.parse_args()
    res = ev.run_experiment(base_spec(args.seeds, sweep=ev.Sweep("beacon_count", tuple(args.counts))))
    for r in res.reports:
        n = r.setting["value"]
        print(f"{n:2d} beacons ({AREA_M2 / n:5.1f} m2 each): {r.median_of_medians:.3f} m")
    write_rows(args.out, REPORT_HEADER, report_rows(res))


if __name__ == "__main__":
    main()
