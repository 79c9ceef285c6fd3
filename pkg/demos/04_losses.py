#!/usr/bin/env python3
"""Reference loss values on synthetic predictions.

The training objective is a weighted sum of four terms: cross entropy and
soft Dice on the 7-channel segmentation, cross entropy on the direction
map (foreground only), and an L2 penalty on the 6 per-class counts.
"""

import math

import numpy as np

from nucleitk import LossWeights, SynthConfig, generate, total_loss


def one_hot(labels, channels, sentinel=None):
    labels = np.asarray(labels)
    filled = labels if sentinel is None else np.where(labels == sentinel, 0, labels)
    out = np.zeros(labels.shape + (channels,), dtype=np.float64)
    rows, cols = np.indices(labels.shape)
    out[rows, cols, filled.astype(np.int64)] = 1.0
    return out


bundle = generate(SynthConfig(seed=20, n_nuclei=6))
counts = bundle.counts.astype(float)


def report(title, breakdown):
    print(f"{title}:")
    print(f"    ce={breakdown.ce:.6f}  dice={breakdown.dice:.6f}  "
          f"dir_ce={breakdown.dir_ce:.6f}  l2={breakdown.l2:.6f}")
    print(f"    total={breakdown.total:.6f}")
    print()


# a perfect prediction scores (almost) zero; only the Dice epsilon is left
seg = one_hot(bundle.classes, 7)
dirs = one_hot(bundle.directions, 4, sentinel=255)
report("perfect prediction", total_loss(seg, bundle.classes, dirs,
                                        bundle.directions, counts, counts))

# an uninformed prediction lands on the analytic entropy values
uniform_seg = np.full(seg.shape, 1.0 / 7.0)
uniform_dir = np.full(dirs.shape, 0.25)
breakdown = total_loss(uniform_seg, bundle.classes, uniform_dir,
                       bundle.directions, counts * 0, counts)
report("uniform prediction", breakdown)
print(f"    ln 7 = {math.log(7):.6f} (ce), ln 4 = {math.log(4):.6f} (dir_ce)")
print()

# blending toward uniform degrades every term smoothly
for alpha in (0.75, 0.5, 0.25):
    mixed_seg = alpha * seg + (1 - alpha) * uniform_seg
    mixed_dir = alpha * dirs + (1 - alpha) * uniform_dir
    b = total_loss(mixed_seg, bundle.classes, mixed_dir, bundle.directions,
                   counts + (1 - alpha), counts)
    report(f"{alpha:.0%} confidence", b)

# custom term weights change only the total, never the terms
weights = LossWeights(w_ce=1.0, w_dice=1.0, w_dir=1.0, w_l2=1.0)
b = total_loss(uniform_seg, bundle.classes, uniform_dir, bundle.directions,
               counts * 0, counts, weights)
report("uniform prediction, unit weights", b)
