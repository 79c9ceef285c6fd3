#!/usr/bin/env python3
"""Splitting touching nuclei with the direction-map sweep.

Two nuclei that share a boundary form a single connected foreground blob,
so plain connected components cannot separate them. The reconstruction
sweep can: class-0 regions seed new instances, then classes 1..N-1 are
merged onto whichever neighbor already owns the preceding class.
"""

import numpy as np
from scipy import ndimage

from nucleitk import (
    SynthConfig,
    assign_classes,
    counts_from_instances,
    encode_direction_map,
    generate_touching_pair,
    reconstruct_instances,
)

pair = generate_touching_pair(SynthConfig(seed=11, height=48, width=48))
bundle = pair.bundle

foreground = bundle.instances > 0
_, blobs = ndimage.label(foreground)
print("true instances:              2")
print(f"connected foreground blobs:  {blobs}   <- touching, so they fuse")
print(f"separable by direction map:  {pair.separable}")
print()

# encode then reconstruct, as a model's decoder would
directions = encode_direction_map(bundle.instances)
recovered = reconstruct_instances(bundle.classes, directions)
print(f"instances after the sweep:   {recovered.max()}")

# the recovered footprints match the originals exactly (up to index swap)
for original in (1, 2):
    mask = bundle.instances == original
    labels = np.unique(recovered[mask])
    print(f"  original nucleus {original} -> recovered index "
          f"{int(labels[0])} ({mask.sum()} px, clean={labels.size == 1})")
print()

# majority vote over the class map attaches a class to each instance
result = assign_classes(recovered, bundle.classes)
print("per-instance classes:", result.per_instance_class)
print("counts by class:     ", counts_from_instances(result))
print("ground-truth counts: ", bundle.counts)
