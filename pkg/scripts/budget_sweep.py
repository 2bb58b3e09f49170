"""Trusted-device counts as the deadline grows, for both task presets.

Writes ``budget,face,virus`` CSV rows. Counts are trusted (owner, candidate)
pairs summed over every owner unless ``--owner`` picks a single one.

    python scripts/budget_sweep.py --out sweep.csv
"""

import argparse
import csv
import sys

from gmtrust.decision import ChannelModel, TaskSpec, preset_task, trusted_count
from gmtrust.simnet import generate_network


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--devices", type=int, default=500)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--size-mb", type=float, default=10.0)
    p.add_argument("--budgets", default="10,50,100,200,400,700,1000,1500,2000,3000")
    p.add_argument("--owner", type=int, help="count for one owner only")
    p.add_argument("--out", help="CSV path (stdout when omitted)")
    args = p.parse_args(argv)

    devices = generate_network(args.devices, args.seed).devices
    owners = devices if args.owner is None else [devices[args.owner]]
    ch = ChannelModel()
    rows = []
    for budget in (float(b) for b in args.budgets.split(",")):
        row = [budget]
        for name in ("face", "virus"):
            t = preset_task(name, args.size_mb)
            task = TaskSpec(t.size_bits, t.density, budget)
            row.append(sum(trusted_count(o, devices, task, ch) for o in owners))
        rows.append(row)

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["budget_s", "face", "virus"])
    w.writerows(rows)
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
