#!/usr/bin/env python3
"""Direction maps from first principles.

Every foreground pixel gets the quantized angle from itself toward its
instance centroid. With N=4, class 0 covers [0, 90) degrees measured
counter-clockwise from the +x axis (y grows upward, so image row 0 is "up").
Background pixels carry the sentinel 255.
"""

import numpy as np

from nucleitk import DirectionConfig, direction_class, encode_direction_map, \
    instance_centroids


def show(name, arr):
    print(f"{name}:")
    for row in arr:
        print("   ", " ".join(f"{v:>3}" for v in row))
    print()


# one 3x3 nucleus; its centroid is the center pixel (1, 1)
instances = np.zeros((5, 5), dtype=np.uint16)
instances[1:4, 1:4] = 1
show("instance map", instances)

centroids = instance_centroids(instances)
print("centroid of instance 1:", tuple(centroids[1]), "\n")

directions = encode_direction_map(instances)
show("direction map (255 = background)", directions)

# the quadrant layout, pixel by pixel
print("per-pixel classes around the centroid:")
for row in range(1, 4):
    for col in range(1, 4):
        cls = direction_class(row, col, centroids[1][0], centroids[1][1])
        print(f"    pixel ({row}, {col}) -> class {cls}")
print()

# the same nucleus under an 8-sector quantization
cfg = DirectionConfig(n_directions=8)
show("8 sectors", encode_direction_map(instances, cfg))

# sector boundaries are half-open: a pixel exactly on the +y axis
# (90 degrees) already belongs to class 1
print("pixel straight above the centroid:",
      direction_class(0, 1, 1.0, 1.0), "(class 1, sector [90, 180))")

# rotating the sector origin relabels the quadrants
cfg = DirectionConfig(n_directions=4, sector_start=45.0)
show("4 sectors starting at 45 degrees", encode_direction_map(instances, cfg))
