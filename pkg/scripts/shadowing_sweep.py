"""Median error against simulated shadowing sigma and ground-truth wall loss.

Useful for seeing which channel settings put the simulated median near a
target value; every other parameter stays at its default.
"""

from incvoronoi import evaluation as ev

from _common import REPORT_HEADER, base_spec, parser, report_rows, write_rows


def main():
    p = parser(__doc__, "shadowing_sweep.csv")
    p.add_argument("--sigma", type=float, nargs="+", default=[0, 2, 4, 6, 8, 10, 12])
    p.add_argument("--wall-loss", type=float, nargs="+", default=[])
    args = p.parse_args()
    rows = []
    res = ev.run_experiment(base_spec(args.seeds, sweep=ev.Sweep("sigma", tuple(args.sigma))))
    rows += list(report_rows(res, ["sigma"]))
    if args.wall_loss:
        res2 = ev.run_experiment(base_spec(args.seeds, sweep=ev.Sweep("wall_loss", tuple(args.wall_loss))))
        rows += list(report_rows(res2, ["wall_loss"]))
    for r in rows:
        print(f"{r[0]}={r[2]}: {r[3]} m")
    write_rows(args.out, ["knob", *REPORT_HEADER], rows)


if __name__ == "__main__":
    main()
