"""Seeded synthetic-nuclei bundles for round-trip tests and demos.

Nuclei are rasterized filled ellipses (pixel-center-inside test): convex,
centroid well inside the shape, so the direction sectors behave the way the
reconstruction sweep expects. Candidates are drawn by rejection sampling and
must pass shape-quality guards before being placed:

* the raster is a single 4-connected component
* the direction sectors chain: the class-0 region is one 4-connected
  component and every class-k component is 4-adjacent to a class k-1 pixel

The second guard is what makes non-touching bundles exactly recoverable by
the direction sweep; candidates whose rasterization breaks it (thin or tiny
shapes) are rejected rather than silently accepted.

Randomness comes from numpy's PCG64 generator, fixed by name so a given
(seed, config) pair reproduces bit-identical bundles. Placement that fails
``max_attempts`` times raises PackingError instead of quietly generating
fewer nuclei.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .directions import DirectionConfig, encode_direction_map
from .mapio import NUM_CLASSES
from .reconstruct import _STRUCTURES

_S4 = _STRUCTURES[4]


class PackingError(RuntimeError):
    """Raised when rejection sampling cannot place a nucleus."""


class Bundle(NamedTuple):
    """Ground truth for one synthetic image."""

    instances: np.ndarray
    classes: np.ndarray
    directions: np.ndarray
    counts: np.ndarray


class TouchingPair(NamedTuple):
    """A two-nuclei bundle plus whether its class-0 regions are separate
    components (the condition under which reconstruction must split it)."""

    bundle: Bundle
    separable: bool


@dataclass(frozen=True)
class SynthConfig:
    """Geometry, class mix and seed for the generator.

    ``radius_range`` bounds the semi-major axis; ``eccentricity_range``
    controls elongation (0 = circle). ``allow_touching`` drops the
    background-gap requirement between nuclei: a later nucleus may abut
    earlier ones and yields any overlapped pixels to them, as long as what
    remains is connected.
    """

    height: int = 96
    width: int = 96
    n_nuclei: int = 8
    radius_range: tuple[float, float] = (4.0, 8.0)
    eccentricity_range: tuple[float, float] = (0.0, 0.6)
    allow_touching: bool = False
    class_weights: tuple[float, ...] = (1.0,) * NUM_CLASSES
    seed: int = 0
    max_attempts: int = 1000

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError(f"image size must be positive, got "
                             f"{self.height}x{self.width}")
        if self.n_nuclei < 0:
            raise ValueError(f"n_nuclei must be >= 0, got {self.n_nuclei}")
        rmin, rmax = self.radius_range
        if not (2.0 <= rmin <= rmax):
            raise ValueError(f"radius range must satisfy 2 <= min <= max, "
                             f"got {self.radius_range}")
        if self.n_nuclei and min(self.height, self.width) - 1 < 2 * rmin:
            raise ValueError(f"{self.height}x{self.width} image cannot fit a "
                             f"radius-{rmin} nucleus")
        elo, ehi = self.eccentricity_range
        if not (0.0 <= elo <= ehi < 1.0):
            raise ValueError(f"eccentricity range must satisfy 0 <= min <= max < 1, "
                             f"got {self.eccentricity_range}")
        if len(self.class_weights) != NUM_CLASSES:
            raise ValueError(f"class_weights needs {NUM_CLASSES} entries, "
                             f"got {len(self.class_weights)}")
        if any(not math.isfinite(w) or w < 0 for w in self.class_weights):
            raise ValueError("class_weights must be finite and >= 0")
        if not any(self.class_weights):
            raise ValueError("class_weights must not be all zero")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.max_attempts < 1:
            raise ValueError(f"max_attempts must be >= 1, got {self.max_attempts}")


def _ellipse_mask(cy: float, cx: float, a: float, b: float, phi: float
                  ) -> tuple[int, int, np.ndarray]:
    """Rasterize an ellipse; returns (row0, col0, local boolean mask).

    A pixel belongs to the ellipse when its center lies inside. The caller
    guarantees the bounding box is inside the image.
    """
    r0 = int(math.floor(cy - a))
    c0 = int(math.floor(cx - a))
    r1 = int(math.ceil(cy + a))
    c1 = int(math.ceil(cx + a))
    dy = np.arange(r0, r1 + 1, dtype=np.float64)[:, None] - cy
    dx = np.arange(c0, c1 + 1, dtype=np.float64)[None, :] - cx
    cos_p, sin_p = math.cos(phi), math.sin(phi)
    u = dx * cos_p + dy * sin_p
    v = -dx * sin_p + dy * cos_p
    return r0, c0, (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _single_component(mask: np.ndarray) -> bool:
    return ndimage.label(mask, structure=_S4)[1] == 1


def _sectors_chain(mask: np.ndarray, dcfg: DirectionConfig) -> bool:
    """True when the shape's direction sectors support the merge sweep:
    class 0 is one component and every class-k component has a class k-1
    4-neighbor. Translation-invariant, so the local mask suffices."""
    dirs = encode_direction_map(mask.astype(np.uint16), dcfg)
    m0 = dirs == 0
    if not m0.any():
        return False
    if ndimage.label(m0, structure=_S4)[1] != 1:
        return False
    for k in range(1, dcfg.n_directions):
        mk = dirs == k
        if not mk.any():
            continue
        labels, n = ndimage.label(mk, structure=_S4)
        grown = ndimage.binary_dilation(dirs == k - 1, structure=_S4)
        touched = np.unique(labels[grown & mk])
        if np.count_nonzero(touched) != n:
            return False
    return True


def _stamp_blocked(blocked: np.ndarray, r0: int, c0: int, mask: np.ndarray) -> None:
    """Mark mask plus its 8-neighborhood in the global blocked grid."""
    grown = ndimage.binary_dilation(np.pad(mask, 1), structure=np.ones((3, 3), bool))
    h, w = blocked.shape
    gr0, gc0 = r0 - 1, c0 - 1
    rs = slice(max(0, gr0), min(h, gr0 + grown.shape[0]))
    cs = slice(max(0, gc0), min(w, gc0 + grown.shape[1]))
    blocked[rs, cs] |= grown[rs.start - gr0:rs.stop - gr0,
                             cs.start - gc0:cs.stop - gc0]


def _draw_candidate(rng: np.random.Generator, config: SynthConfig):
    """One geometry draw; fixed draw order keeps the stream reproducible."""
    cy = rng.uniform(0.0, config.height - 1.0)
    cx = rng.uniform(0.0, config.width - 1.0)
    a = rng.uniform(*config.radius_range)
    e = rng.uniform(*config.eccentricity_range)
    phi = rng.uniform(0.0, math.pi)
    return cy, cx, a, a * math.sqrt(1.0 - e * e), phi


def _in_bounds(cy, cx, a, height, width) -> bool:
    return cy - a >= 0 and cy + a <= height - 1 and cx - a >= 0 and cx + a <= width - 1


def _finish_bundle(occupied: np.ndarray, n_placed: int, rng: np.random.Generator,
                   config: SynthConfig, dcfg: DirectionConfig) -> Bundle:
    instances = occupied.astype(np.uint16)
    weights = np.asarray(config.class_weights, dtype=np.float64)
    lut = np.zeros(n_placed + 1, dtype=np.uint8)
    if n_placed:
        lut[1:] = 1 + rng.choice(NUM_CLASSES, size=n_placed, p=weights / weights.sum())
    class_map = lut[instances.astype(np.int64)]
    directions = encode_direction_map(instances, dcfg)
    counts = np.bincount(lut[1:], minlength=NUM_CLASSES + 1)[1:].astype(np.int64)
    return Bundle(instances=instances, classes=class_map,
                  directions=directions, counts=counts)


def generate(config: SynthConfig,
             direction_config: DirectionConfig = DirectionConfig()) -> Bundle:
    """Generate one synthetic ground-truth bundle.

    Parameters
    ----------
    config : SynthConfig
    direction_config : DirectionConfig
        Quantization used for the bundle's direction map.

    Returns
    -------
    Bundle
        Instance map, class map, direction map and per-class counts. The
        direction map equals ``encode_direction_map(instances)`` and the
        counts equal the per-class instance tally, by construction.

    Raises
    ------
    PackingError
        When a nucleus cannot be placed within ``config.max_attempts``
        rejection-sampling attempts. The image is never silently generated
        with fewer nuclei than requested.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    h, w = config.height, config.width
    occupied = np.zeros((h, w), dtype=np.int32)
    blocked = np.zeros((h, w), dtype=bool)

    for i in range(config.n_nuclei):
        for _ in range(config.max_attempts):
            cy, cx, a, b, phi = _draw_candidate(rng, config)
            if not _in_bounds(cy, cx, a, h, w):
                continue
            r0, c0, mask = _ellipse_mask(cy, cx, a, b, phi)
            if not mask.any() or not _single_component(mask):
                continue
            if not _sectors_chain(mask, direction_config):
                continue
            win = (slice(r0, r0 + mask.shape[0]), slice(c0, c0 + mask.shape[1]))
            if config.allow_touching:
                clipped = mask & (occupied[win] == 0)
                if not clipped.any() or not _single_component(clipped):
                    continue
                occupied[win][clipped] = i + 1
            else:
                if blocked[win][mask].any():
                    continue
                occupied[win][mask] = i + 1
                _stamp_blocked(blocked, r0, c0, mask)
            break
        else:
            raise PackingError(
                f"failed to place nucleus {i + 1} of {config.n_nuclei} after "
                f"{config.max_attempts} attempts ({h}x{w}, "
                f"radius {config.radius_range}, touching={config.allow_touching})")

    return _finish_bundle(occupied, config.n_nuclei, rng, config, direction_config)


def generate_touching_pair(config: SynthConfig,
                           direction_config: DirectionConfig = DirectionConfig()
                           ) -> TouchingPair:
    """Generate two ellipses that touch (4-adjacent) but do not overlap.

    ``config.n_nuclei`` is ignored; the pair is always exactly two nuclei,
    both passing the usual shape guards. The ``separable`` flag records
    whether the bundle's direction-class-0 mask splits into two 4-connected
    components; only then is the reconstruction sweep contracted to recover
    two instances.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    h, w = config.height, config.width

    first = None
    for _ in range(config.max_attempts):
        cy, cx, a, b, phi = _draw_candidate(rng, config)
        if not _in_bounds(cy, cx, a, h, w):
            continue
        r0, c0, mask = _ellipse_mask(cy, cx, a, b, phi)
        if mask.any() and _single_component(mask) \
                and _sectors_chain(mask, direction_config):
            first = (cy, cx, a, r0, c0, mask)
            break
    if first is None:
        raise PackingError(
            f"failed to place the first nucleus after {config.max_attempts} attempts")
    cy1, cx1, a1, r0, c0, mask1 = first

    occupied = np.zeros((h, w), dtype=np.int32)
    win1 = (slice(r0, r0 + mask1.shape[0]), slice(c0, c0 + mask1.shape[1]))
    occupied[win1][mask1] = 1
    reach = ndimage.binary_dilation(occupied > 0, structure=_S4)

    for _ in range(config.max_attempts):
        ang = rng.uniform(0.0, 2.0 * math.pi)
        a2 = rng.uniform(*config.radius_range)
        e2 = rng.uniform(*config.eccentricity_range)
        phi2 = rng.uniform(0.0, math.pi)
        dist = rng.uniform(0.5 * (a1 + a2), a1 + a2 + 2.0)
        cy2 = cy1 + dist * math.sin(ang)
        cx2 = cx1 + dist * math.cos(ang)
        b2 = a2 * math.sqrt(1.0 - e2 * e2)
        if not _in_bounds(cy2, cx2, a2, h, w):
            continue
        r2, c2, mask2 = _ellipse_mask(cy2, cx2, a2, b2, phi2)
        if not mask2.any() or not _single_component(mask2):
            continue
        if not _sectors_chain(mask2, direction_config):
            continue
        win2 = (slice(r2, r2 + mask2.shape[0]), slice(c2, c2 + mask2.shape[1]))
        if (occupied[win2][mask2] > 0).any():
            continue  # overlap not allowed for the pair
        if not reach[win2][mask2].any():
            continue  # not touching
        occupied[win2][mask2] = 2
        bundle = _finish_bundle(occupied, 2, rng, config, direction_config)
        n0 = ndimage.label(bundle.directions == 0, structure=_S4)[1]
        return TouchingPair(bundle=bundle, separable=n0 == 2)

    raise PackingError(
        f"failed to attach the second nucleus after {config.max_attempts} attempts")
