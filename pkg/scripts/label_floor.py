"""Error of simple reference predictors on the label slot of a synthetic dataset.

Shows how much of the test RMSE is irreducible outcome noise. The oracles
read each trustee's true reliability from the simulator, which no learned
model can see.

    python scripts/label_floor.py --devices 200 --tasks 4000
"""

import argparse
from collections import defaultdict

import numpy as np

from gmtrust.simnet import generate_network, simulate
from gmtrust.snapshot import WindowSpec
from gmtrust.trainer import label_pairs, prepare, split_pairs


def rmse(pred, target):
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(target)) ** 2)))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--devices", type=int, default=200)
    p.add_argument("--tasks", type=int, default=4000)
    p.add_argument("--slots", type=int, default=10)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--split-seed", type=int, default=0)
    args = p.parse_args(argv)

    ds = simulate(generate_network(args.devices, args.seed), args.tasks)
    window = WindowSpec(args.slots, ds.horizon_s)
    _, history, last = prepare(ds, window)
    pairs = label_pairs(last, 256)
    target = np.array([e.target_value for e in pairs])
    _, test = split_pairs(pairs, 0.2, args.split_seed)
    test_t = np.array([e.target_value for e in test])

    by_trustee = defaultdict(list)
    for s in history:
        for e in s.edges:
            by_trustee[e.trustee_id].append(e.weight)
    overall = np.mean([w for ws in by_trustee.values() for w in ws])
    hist_mean = [np.mean(by_trustee[e.trustee_id]) if by_trustee[e.trustee_id] else overall for e in pairs]

    mean_oracle, mode_oracle = [], []
    for e in pairs:
        prof = ds.devices[e.trustee_id].profile
        r = prof.reliability_at(args.slots - 1)
        base = 0.6 * (1.0 - prof.loss_mean)
        mean_oracle.append(base + 0.4 * r)
        mode_oracle.append(base + (0.4 if r >= 0.5 else 0.0))

    print(f"label pairs            {len(pairs)} (test {len(test)})")
    print(f"constant mean (all)    {rmse(np.full_like(target, target.mean()), target):.4f}")
    print(f"constant mean (test)   {rmse(np.full_like(test_t, test_t.mean()), test_t):.4f}")
    print(f"trustee history mean   {rmse(hist_mean, target):.4f}")
    print(f"true reliability, mean {rmse(mean_oracle, target):.4f}")
    print(f"true reliability, mode {rmse(mode_oracle, target):.4f}")


if __name__ == "__main__":
    main()
