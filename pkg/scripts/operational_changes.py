"""Median error of all three systems under per-AP drift, a device gain
offset and a uniform transmit-power change, relative to each system's own
baseline."""


from incvoronoi import evaluation as ev

from _common import base_spec, parser


def main():
    p = parser(__doc__, "operational_changes")
    args = p.parse_args()
    spec = base_spec(args.seeds, systems=ev.SYSTEMS)
    cmp = ev.compare_systems(spec)
    ev.write_comparison(cmp, spec, args.out)
    for row in cmp.table():
        cells = [f"base {row['baseline']:.2f} m"]
        for cond in ("temporal", "heterogeneous", "tx_power"):
            cells.append(f"{cond} {row[cond]:.2f} m ({row[cond + '_degradation_pct']:+.1f}%)")
        print(f"{row['system']:12s} " + ", ".join(cells))
    for msg in ev.comparison_violations(cmp):
        print("violation:", msg)


if __name__ == "__main__":
    main()
