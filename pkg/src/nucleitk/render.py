"""Color rendering of instance/class maps for eyeballing results.

Every instance gets its own color (background stays black). Hues walk the
golden angle so neighboring indices land far apart on the color wheel; a
final repair pass nudges any colors that collide after uint8 quantization,
so distinctness is exact, not just likely. When a class map is supplied the
hue is anchored by the class and only varied slightly per instance, which
keeps instances distinguishable while making classes recognizable.
"""

from __future__ import annotations

import colorsys

import numpy as np

from .mapio import NUM_CLASSES, validate_class_map, validate_instance_map

_GOLDEN = 0.6180339887498949
# anchor hues per class 1..6: red, orange, yellow-green, cyan, blue, magenta
_CLASS_HUES = (0.0, 0.09, 0.26, 0.5, 0.62, 0.83)


def _distinct(colors: np.ndarray) -> np.ndarray:
    """Nudge duplicate rows (and pure black) until all rows are unique."""
    seen = {(0, 0, 0)}
    for i in range(colors.shape[0]):
        c = tuple(int(v) for v in colors[i])
        while c in seen:
            c = (c[0], c[1], (c[2] + 1) % 256)
            if c == (0, 0, 0):
                c = (c[0], (c[1] + 1) % 256, 1)
        seen.add(c)
        colors[i] = c
    return colors


def instance_palette(n: int, class_of: dict[int, int] | None = None) -> np.ndarray:
    """(n+1, 3) uint8 palette: row 0 black, rows 1..n pairwise distinct.

    With ``class_of`` (instance index -> class ID), hues are grouped by
    class instead of walking the whole wheel.
    """
    if n < 0:
        raise ValueError(f"palette size must be >= 0, got {n}")
    palette = np.zeros((n + 1, 3), dtype=np.uint8)
    if n == 0:
        return palette
    idx = np.arange(1, n + 1)
    if class_of is None:
        hue = (idx * _GOLDEN) % 1.0
    else:
        hue = np.empty(n, dtype=np.float64)
        for k, i in enumerate(idx):
            cls = class_of.get(int(i), 0)
            base = _CLASS_HUES[cls - 1] if 1 <= cls <= NUM_CLASSES else 0.0
            hue[k] = (base + 0.04 * ((int(i) * _GOLDEN) % 1.0)) % 1.0
    sat = np.where(idx % 2 == 0, 0.85, 0.6)
    val = 0.95 - 0.25 * ((idx // 2) % 3) / 2.0
    rgb = np.array([colorsys.hsv_to_rgb(h, s, v)
                    for h, s, v in zip(hue, sat, val)])
    palette[1:] = _distinct(np.round(rgb * 255).astype(np.uint8))
    return palette


def render_panoptic(instance_map: np.ndarray,
                    class_map: np.ndarray | None = None) -> np.ndarray:
    """Render an instance map (optionally class-aware) to an (H, W, 3) image.

    Background renders black; each instance gets a distinct color. When a
    class map is given, each instance's hue comes from its majority class.
    """
    validate_instance_map(instance_map)
    labels = np.asarray(instance_map).astype(np.int64)
    n = int(labels.max(initial=0))
    class_of = None
    if class_map is not None:
        validate_class_map(class_map)
        class_map = np.asarray(class_map)
        if class_map.shape != labels.shape:
            raise ValueError(
                f"shape mismatch: instances {labels.shape} vs classes {class_map.shape}")
        class_of = {}
        for idx in range(1, n + 1):
            member = labels == idx
            if member.any():
                votes = np.bincount(class_map[member].astype(np.int64),
                                    minlength=NUM_CLASSES + 1)
                votes[0] = 0
                class_of[idx] = int(np.argmax(votes)) if votes.any() else 0
    return instance_palette(n, class_of)[labels]
