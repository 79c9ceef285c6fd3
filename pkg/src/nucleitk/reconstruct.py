"""Instance reconstruction from predicted class and direction maps.

The inference-side postprocessing chain:

1. ``argmax_channels`` / ``maps_from_outputs`` collapse probability tensors
   into a hard class map and a hard direction map (direction classes only on
   segmentation foreground, sentinel elsewhere).
2. ``reconstruct_instances`` recovers an instance map from the direction map
   by sweeping the direction classes in order: connected components of class
   0 seed the instances, then components of class k merge into an adjacent
   instance through its class k-1 pixels.
3. ``assign_classes`` gives each instance the majority class of its pixels.
4. ``postprocess_counts`` / ``counts_from_instances`` produce the per-class
   count vector.

All steps are deterministic: components are processed in raster order of
their first pixel, merge ties go to the instance sharing the most adjacent
pixel pairs and then to the smallest index, and argmax ties go to the
smallest channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .mapio import (
    BACKGROUND,
    DIRECTION_SENTINEL,
    MAX_INSTANCE_INDEX,
    NUM_CLASSES,
    NUM_SEG_CHANNELS,
    validate_class_map,
    validate_counts,
    validate_direction_map,
    validate_instance_map,
    validate_prob_tensor,
)

_STRUCTURES = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}
_OFFSETS = {
    4: ((-1, 0), (0, -1), (0, 1), (1, 0)),
    8: ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)),
}


@dataclass(frozen=True)
class ReconstructionConfig:
    """Connectivity and direction-class count for the reconstruction sweep.

    4-connectivity is the default for both components and merge adjacency:
    with 8-connectivity, touching nuclei can bridge diagonally, which defeats
    the separation the direction map exists to provide.
    """

    connectivity: int = 4
    n_directions: int = 4

    def __post_init__(self):
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.n_directions < 2 or 360 % self.n_directions != 0:
            raise ValueError(
                f"n_directions must be >= 2 and divide 360, got {self.n_directions}")


@dataclass
class PanopticResult:
    """Joint instance/class segmentation of one image.

    ``instances`` and ``classes`` share the same background pixel set, and
    every pixel of one instance carries that instance's class in ``classes``.
    """

    instances: np.ndarray
    classes: np.ndarray
    per_instance_class: dict[int, int] = field(default_factory=dict)


def argmax_channels(tensor: np.ndarray) -> np.ndarray:
    """Per-pixel index of the largest channel, smallest index on ties."""
    tensor = np.asarray(tensor)
    validate_prob_tensor(tensor)
    return np.argmax(tensor, axis=2).astype(np.int64)


def maps_from_outputs(seg: np.ndarray, directions: np.ndarray,
                      config: ReconstructionConfig = ReconstructionConfig()
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Collapse network output tensors into hard class and direction maps.

    The segmentation argmax decides foreground: the direction argmax is kept
    only where the class map is non-background, and background pixels get the
    direction sentinel regardless of the direction channels.

    Parameters
    ----------
    seg : numpy.ndarray
        (H, W, 7) segmentation/classification tensor.
    directions : numpy.ndarray
        (H, W, N) direction tensor with the same height and width.

    Returns
    -------
    (numpy.ndarray, numpy.ndarray)
        uint8 class map and uint8 direction map.
    """
    seg = np.asarray(seg)
    directions = np.asarray(directions)
    validate_prob_tensor(seg)
    validate_prob_tensor(directions)
    if seg.shape[2] != NUM_SEG_CHANNELS:
        raise ValueError(
            f"segmentation tensor needs {NUM_SEG_CHANNELS} channels, got {seg.shape[2]}")
    if seg.shape[:2] != directions.shape[:2]:
        raise ValueError(
            f"shape mismatch: seg {seg.shape[:2]} vs directions {directions.shape[:2]}")
    if directions.shape[2] != config.n_directions:
        raise ValueError(
            f"direction tensor has {directions.shape[2]} channels, config says "
            f"{config.n_directions}")
    class_map = argmax_channels(seg).astype(np.uint8)
    dir_map = np.full(class_map.shape, DIRECTION_SENTINEL, dtype=np.uint8)
    fg = class_map != BACKGROUND
    if fg.any():
        dir_map[fg] = argmax_channels(directions)[fg].astype(np.uint8)
    return class_map, dir_map


def _canonical_labels(mask: np.ndarray, connectivity: int) -> tuple[np.ndarray, int]:
    """Label components so index 1 is the component whose first pixel comes
    earliest in raster order, index 2 the next, and so on."""
    labels, n = ndimage.label(mask, structure=_STRUCTURES[connectivity])
    if n == 0:
        return labels.astype(np.int64), 0
    flat = labels.ravel()
    nz = np.flatnonzero(flat)
    first = np.full(n + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat[nz], nz)
    order = np.argsort(first[1:], kind="stable")
    remap = np.zeros(n + 1, dtype=np.int64)
    remap[order + 1] = np.arange(1, n + 1)
    return remap[labels], n


def connected_components(mask: np.ndarray, connectivity: int = 4) -> list[np.ndarray]:
    """Connected components of a boolean mask, in raster order of first pixel.

    Returns a list of (k, 2) int arrays of (row, col) pixel coordinates, each
    in raster order.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if connectivity not in _STRUCTURES:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    labels, n = _canonical_labels(mask, connectivity)
    out = []
    for idx in range(1, n + 1):
        rows, cols = np.nonzero(labels == idx)
        out.append(np.stack([rows, cols], axis=1))
    return out


def _shifted(arr: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """arr sampled at (row+dr, col+dc), zero outside the grid."""
    h, w = arr.shape
    out = np.zeros_like(arr)
    rs = slice(max(0, -dr), min(h, h - dr))
    cs = slice(max(0, -dc), min(w, w - dc))
    out[rs, cs] = arr[max(0, dr):h + min(0, dr), max(0, dc):w + min(0, dc)]
    return out


def reconstruct_instances(class_map: np.ndarray, direction_map: np.ndarray,
                          config: ReconstructionConfig = ReconstructionConfig()
                          ) -> np.ndarray:
    """Recover an instance map from hard class and direction maps.

    The sweep walks the direction classes in ascending order. Components of
    class 0 each receive a fresh index (1, 2, ... in raster order). A
    component of class k then merges into the instance owning class k-1
    pixels adjacent to it; if several instances qualify, the one sharing the
    most adjacent pixel pairs wins, then the smallest index. A component with
    no indexed class k-1 neighbor becomes a fresh instance. There is no
    wrap-around from class N-1 back to class 0.

    Parameters
    ----------
    class_map : numpy.ndarray
        2-D uint8 class map; only its background/foreground split is used.
    direction_map : numpy.ndarray
        2-D uint8 direction map, sentinel exactly on the class map's
        background.
    config : ReconstructionConfig

    Returns
    -------
    numpy.ndarray
        uint16 instance map covering exactly the foreground.
    """
    validate_class_map(class_map)
    validate_direction_map(direction_map, config.n_directions)
    class_map = np.asarray(class_map)
    direction_map = np.asarray(direction_map)
    if class_map.shape != direction_map.shape:
        raise ValueError(
            f"shape mismatch: classes {class_map.shape} vs directions {direction_map.shape}")
    bg = class_map == BACKGROUND
    sentinel = direction_map == DIRECTION_SENTINEL
    if (bg != sentinel).any():
        rows, cols = np.nonzero(bg != sentinel)
        r, c = int(rows[0]), int(cols[0])
        raise ValueError(
            "direction/background inconsistency at pixel "
            f"({r}, {c}): class {int(class_map[r, c])}, "
            f"direction {int(direction_map[r, c])}")

    offsets = _OFFSETS[config.connectivity]
    out = np.zeros(class_map.shape, dtype=np.int64)
    next_index = 0

    for k in range(config.n_directions):
        comp, n = _canonical_labels(direction_map == k, config.connectivity)
        if n == 0:
            continue
        if k == 0:
            out[comp > 0] = comp[comp > 0] + next_index
            next_index += n
            continue
        # indices visible through class k-1 pixels; all of them were assigned
        # during step k-1, so the > 0 filter only guards the contract
        prev_inst = np.where(direction_map == k - 1, out, 0)
        pair_comp = []
        pair_inst = []
        for dr, dc in offsets:
            neigh = _shifted(prev_inst, dr, dc)
            sel = (comp > 0) & (neigh > 0)
            if sel.any():
                pair_comp.append(comp[sel])
                pair_inst.append(neigh[sel])
        if pair_comp:
            pair_comp = np.concatenate(pair_comp)
            pair_inst = np.concatenate(pair_inst)
            order = np.argsort(pair_comp, kind="stable")
            pair_comp = pair_comp[order]
            pair_inst = pair_inst[order]
        else:
            pair_comp = np.empty(0, dtype=np.int64)
            pair_inst = np.empty(0, dtype=np.int64)
        starts = np.searchsorted(pair_comp, np.arange(1, n + 1), side="left")
        ends = np.searchsorted(pair_comp, np.arange(1, n + 1), side="right")
        target = np.zeros(n + 1, dtype=np.int64)
        for c in range(1, n + 1):
            votes = pair_inst[starts[c - 1]:ends[c - 1]]
            if votes.size:
                # bincount+argmax: max pair count, then smallest index
                target[c] = int(np.argmax(np.bincount(votes)))
            else:
                next_index += 1
                target[c] = next_index
        out[comp > 0] = target[comp[comp > 0]]

    if next_index > MAX_INSTANCE_INDEX:
        raise ValueError(
            f"{next_index} instances exceed the index limit {MAX_INSTANCE_INDEX}")
    return out.astype(np.uint16)


def assign_classes(instance_map: np.ndarray, class_map: np.ndarray) -> PanopticResult:
    """Give each instance the majority class among its pixels.

    Background pixels never vote (the instance foreground must lie inside the
    class-map foreground), and vote ties go to the smallest class ID. The
    returned class map repaints every instance uniformly with its class.
    """
    validate_instance_map(instance_map)
    validate_class_map(class_map)
    instance_map = np.asarray(instance_map)
    class_map = np.asarray(class_map)
    if instance_map.shape != class_map.shape:
        raise ValueError(
            f"shape mismatch: instances {instance_map.shape} vs classes {class_map.shape}")
    stray = (instance_map != BACKGROUND) & (class_map == BACKGROUND)
    if stray.any():
        rows, cols = np.nonzero(stray)
        r, c = int(rows[0]), int(cols[0])
        raise ValueError(
            f"instance {int(instance_map[r, c])} has a background-class pixel at ({r}, {c})")

    n = int(instance_map.max(initial=0))
    votes = np.zeros((n + 1, NUM_CLASSES + 1), dtype=np.int64)
    fg = instance_map != BACKGROUND
    np.add.at(votes, (instance_map[fg].astype(np.int64), class_map[fg].astype(np.int64)), 1)
    votes[:, BACKGROUND] = 0

    per_instance: dict[int, int] = {}
    lut = np.zeros(n + 1, dtype=np.uint8)
    for idx in range(1, n + 1):
        if votes[idx].sum() == 0:
            continue  # index unused in the map
        cls = int(np.argmax(votes[idx]))
        per_instance[idx] = cls
        lut[idx] = cls
    painted = lut[instance_map]
    return PanopticResult(instances=instance_map.astype(np.uint16, copy=True),
                          classes=painted.astype(np.uint8),
                          per_instance_class=per_instance)


def postprocess_counts(raw: np.ndarray) -> np.ndarray:
    """Turn raw regression outputs into integer counts.

    Negative entries clamp to 0; the rest round to the nearest integer with
    .5 ties going away from zero. Idempotent.
    """
    raw = np.asarray(raw, dtype=np.float64)
    validate_counts(raw)
    # np.round would send 0.5 to 0 (banker's rounding); floor(x + 0.5) keeps
    # ties away from zero, and negatives are already clamped
    rounded = np.floor(raw + 0.5)
    return np.where(raw < 0, 0, rounded).astype(np.int64)


def counts_from_instances(result: PanopticResult) -> np.ndarray:
    """Per-class instance counts of a PanopticResult, entry c = class c+1."""
    counts = np.zeros(NUM_CLASSES, dtype=np.int64)
    for cls in result.per_instance_class.values():
        if not 1 <= cls <= NUM_CLASSES:
            raise ValueError(f"instance class {cls} outside 1..{NUM_CLASSES}")
        counts[cls - 1] += 1
    return counts
