"""Median error against the tracker's wall attenuation factor C, with the
simulated ground truth fixed at 5 dB per wall."""

from incvoronoi import evaluation as ev

from _common import REPORT_HEADER, base_spec, parser, report_rows, write_rows


def main():
    p = parser(__doc__, "wall_factor.csv")
    p.add_argument("--c", type=float, nargs="+", default=[0, 1, 2, 3, 4, 5, 6, 7, 8])
    args = p.parse_args()
    res = ev.run_experiment(base_spec(args.seeds, sweep=ev.Sweep("C", tuple(args.c))))
    for r in res.reports:
        print(f"C={r.setting['value']}: {r.median_of_medians:.3f} m")
    write_rows(args.out, REPORT_HEADER, report_rows(res))


if __name__ == "__main__":
    main()
