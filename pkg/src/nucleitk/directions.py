"""Direction-map ground truth: quantized pixel/centroid angles.

Every foreground pixel is labeled with the quantized angle describing where
the pixel sits relative to the centroid of its instance, split into N equal
angular sectors. The resulting map is what a dense classifier is trained to
predict, and the sector ordering is what the instance reconstruction sweep
walks at inference time, so the exact conventions matter.

The authoritative rule (everything else is derived): for a pixel (row, col)
and instance centroid (centroid_row, centroid_col), let

    dx = col - centroid_col
    dy = centroid_row - row

The image row axis points down, so negating the row difference puts the
angle in a conventional y-up frame: a pixel above its centroid has dy > 0.
Then theta = atan2(dy, dx) normalized to [0, 360) degrees and

    class = floor(((theta - sector_start) mod 360) / (360 / N))

With the default ``sector_start = 0`` and N = 4, class 0 covers theta in
[0, 90): the right-upper part of the nucleus. Class 1 is the left-upper
part [90, 180), class 2 the left-lower [180, 270), class 3 the right-lower
[270, 360). Sectors are half-open, so a pixel exactly on a boundary angle
belongs to the sector starting there. A pixel that coincides with its
centroid has no angle and gets class 0 by convention. Background pixels
carry the sentinel 255.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mapio import BACKGROUND, DIRECTION_SENTINEL, validate_instance_map


@dataclass(frozen=True)
class DirectionConfig:
    """Quantization scheme for pixel/centroid directions.

    Attributes
    ----------
    n_directions : int
        Number of angular classes N. Must be >= 2 and divide 360 evenly so
        sector boundaries land on exact degree values.
    sector_start : float
        Angle in degrees where class 0 begins. The default 0 puts class 0 on
        the right-upper quadrant for N=4.
    """

    n_directions: int = 4
    sector_start: float = 0.0

    def __post_init__(self):
        if self.n_directions < 2:
            raise ValueError(f"n_directions must be >= 2, got {self.n_directions}")
        if 360 % self.n_directions != 0:
            raise ValueError(
                f"n_directions must divide 360 evenly, got {self.n_directions}")

    @property
    def sector_width(self) -> float:
        return 360.0 / self.n_directions


def instance_centroids(instance_map: np.ndarray) -> dict[int, tuple[float, float]]:
    """Arithmetic-mean centroid (row, col) of every instance in the map.

    Centroids are plain means of the member pixel coordinates; they need not
    lie inside the instance or on the pixel grid.
    """
    validate_instance_map(instance_map)
    labels = np.asarray(instance_map)
    flat = labels.ravel().astype(np.int64)
    n = int(flat.max(initial=0)) + 1
    counts = np.bincount(flat, minlength=n)
    rows, cols = np.indices(labels.shape)
    row_sums = np.bincount(flat, weights=rows.ravel(), minlength=n)
    col_sums = np.bincount(flat, weights=cols.ravel(), minlength=n)
    out: dict[int, tuple[float, float]] = {}
    for idx in range(1, n):
        if counts[idx]:
            out[idx] = (row_sums[idx] / counts[idx], col_sums[idx] / counts[idx])
    return out


def direction_class(row: float, col: float, centroid_row: float, centroid_col: float,
                    config: DirectionConfig = DirectionConfig()) -> int:
    """Direction class of a single pixel given its instance centroid.

    Scalar reference implementation of the quantization rule; the array
    encoder must agree with it pixel for pixel.
    """
    dx = col - centroid_col
    dy = centroid_row - row  # row axis points down, angles are y-up
    if dx == 0 and dy == 0:
        return 0
    theta = math.degrees(math.atan2(dy, dx)) % 360.0
    cls = int(math.floor(((theta - config.sector_start) % 360.0) / config.sector_width))
    # float mod can return the modulus itself for values a hair below 0
    return 0 if cls == config.n_directions else cls


def encode_direction_map(instance_map: np.ndarray,
                         config: DirectionConfig = DirectionConfig()) -> np.ndarray:
    """Encode an instance map into a direction map.

    Parameters
    ----------
    instance_map : numpy.ndarray
        2-D integer grid, 0 = background, positive values = instance indices.
    config : DirectionConfig
        Number of sectors and the class-0 start angle.

    Returns
    -------
    numpy.ndarray
        uint8 grid of the same shape: direction class 0..N-1 on foreground,
        255 on background.
    """
    validate_instance_map(instance_map)
    labels = np.asarray(instance_map)
    out = np.full(labels.shape, DIRECTION_SENTINEL, dtype=np.uint8)
    fg = labels != BACKGROUND
    if not fg.any():
        return out

    flat = labels.ravel().astype(np.int64)
    n = int(flat.max()) + 1
    counts = np.bincount(flat, minlength=n).astype(np.float64)
    rows, cols = np.indices(labels.shape)
    row_sums = np.bincount(flat, weights=rows.ravel(), minlength=n)
    col_sums = np.bincount(flat, weights=cols.ravel(), minlength=n)
    safe = np.where(counts > 0, counts, 1.0)
    cent_row = row_sums / safe
    cent_col = col_sums / safe

    fr = rows[fg].astype(np.float64)
    fc = cols[fg].astype(np.float64)
    idx = labels[fg].astype(np.int64)
    dx = fc - cent_col[idx]
    dy = cent_row[idx] - fr
    theta = np.degrees(np.arctan2(dy, dx)) % 360.0
    cls = np.floor(((theta - config.sector_start) % 360.0) / config.sector_width)
    cls = cls.astype(np.int64)
    cls[cls == config.n_directions] = 0
    cls[(dx == 0) & (dy == 0)] = 0
    out[fg] = cls.astype(np.uint8)
    return out
