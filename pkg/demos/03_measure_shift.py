#!/usr/bin/env python3
"""Measuring distribution shift between traffic scenarios.

A scenario's signature is its movement-share vector: the fraction of all
vehicles using each movement.  The KL distance between a training
signature and a test signature is the scalar shift measure the reports
are keyed by.  Zero cells are epsilon-smoothed before the log ratio.
"""

import numpy as np

import signalshift as ss

bases = [
    ss.BaseDistribution(np.array([98, 159, 114, 147, 157, 174, 165, 289]), "base1"),
    ss.BaseDistribution(np.array([164, 332, 73, 308, 339, 58, 25, 45]), "base2"),
    ss.BaseDistribution(np.array([345, 85, 190, 101, 153, 127, 125, 188]), "base3"),
]

# pairwise KL between the bases themselves
print("pairwise KL distance (nats) between base signatures:")
print("            " + "  ".join(f"{b.label:>7s}" for b in bases))
for a in bases:
    da = ss.movement_distribution(a.volumes)
    row = [ss.kl_distance(da, ss.movement_distribution(b.volumes)) for b in bases]
    print(f"  {a.label:>8s}  " + "  ".join(f"{v:7.4f}" for v in row))
print("note the asymmetry: KL(a||b) != KL(b||a)\n")

# distance of each generated test scenario from the training average and
# from its own base
train = ss.make_training_set(bases, seed=7)
test = ss.make_test_scenarios(bases, seed=7)
avg = ss.average_training_distribution(train)
print("average training shares:", np.round(avg.p * 100, 1), "%")
print("\nKL distance of each test scenario (vs training average | vs own base):")
for flow in test:
    d = ss.movement_distribution(flow.movement_counts())
    own = next(b for b in bases if b.label == flow.provenance.base_label)
    kl_avg = ss.kl_distance(avg, d)
    kl_own = ss.kl_distance(ss.movement_distribution(own.volumes), d)
    print(f"  {flow.label:22s} {kl_avg:.4f} | {kl_own:.4f}")
print("\nuniform volume scaling leaves the shares almost unchanged (tiny "
      "own-base KL);\nthe distance to the training average is dominated by "
      "how far the base itself\nsits from the training mix, plus the "
      "per-movement perturbation")
