"""Shared test utilities: canonical forms and independent mini-oracles.

Anything here that duplicates library logic does so on purpose, through a
different code path, so the tests cross-check rather than echo the
implementation.
"""

from __future__ import annotations

import math

import numpy as np


def pixel_sets(instance_map: np.ndarray) -> set[frozenset]:
    """Instance map as a set of pixel sets; index values drop out."""
    labels = np.asarray(instance_map)
    out = set()
    for idx in np.unique(labels):
        if idx:
            out.add(frozenset(map(tuple, np.argwhere(labels == idx))))
    return out


def bijection_equal(a: np.ndarray, b: np.ndarray) -> bool:
    """True when two instance maps are equal up to index relabeling."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        return False
    if ((a == 0) != (b == 0)).any():
        return False
    return pixel_sets(a) == pixel_sets(b)


def oracle_direction_class(row, col, cy, cx, n=4, start=0.0) -> int:
    """Scalar quantization rule, restated from the documented convention."""
    dx = col - cx
    dy = cy - row
    if dx == 0 and dy == 0:
        return 0
    theta = math.degrees(math.atan2(dy, dx))
    if theta < 0:
        theta += 360.0
    shifted = theta - start
    while shifted < 0:
        shifted += 360.0
    while shifted >= 360.0:
        shifted -= 360.0
    return int(shifted // (360.0 / n)) % n


def oracle_encode(instance_map: np.ndarray, n=4, start=0.0) -> np.ndarray:
    """Per-pixel re-derivation of the direction map from first principles."""
    labels = np.asarray(instance_map)
    out = np.full(labels.shape, 255, dtype=np.uint8)
    for idx in np.unique(labels):
        if not idx:
            continue
        pts = np.argwhere(labels == idx)
        cy = pts[:, 0].mean()
        cx = pts[:, 1].mean()
        for r, c in pts:
            out[r, c] = oracle_direction_class(r, c, cy, cx, n, start)
    return out


def random_instance_map(rng: np.random.Generator, height=8, width=8,
                        max_instances=4) -> np.ndarray:
    """Random blobby instance map for matching oracles (instances are grown
    from seed points, so arbitrary shapes and adjacencies occur)."""
    labels = np.zeros((height, width), dtype=np.uint16)
    n = int(rng.integers(0, max_instances + 1))
    for idx in range(1, n + 1):
        r = int(rng.integers(0, height))
        c = int(rng.integers(0, width))
        size = int(rng.integers(1, 8))
        frontier = [(r, c)]
        placed = 0
        while frontier and placed < size:
            rr, cc = frontier.pop(int(rng.integers(0, len(frontier))))
            if labels[rr, cc] != 0:
                continue
            labels[rr, cc] = idx
            placed += 1
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nr, nc = rr + dr, cc + dc
                if 0 <= nr < height and 0 <= nc < width and labels[nr, nc] == 0:
                    frontier.append((nr, nc))
    return labels


def brute_force_match(gt: np.ndarray, pred: np.ndarray):
    """Exhaustive pairwise-IoU matching: every (gt, pred) pair is checked
    against the strict 0.5 threshold with plain set arithmetic.

    Returns (pairs, fn_ids, fp_ids) with pairs sorted by gt index.
    """
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    gt_sets = {int(i): set(map(tuple, np.argwhere(gt == i)))
               for i in np.unique(gt) if i}
    pred_sets = {int(i): set(map(tuple, np.argwhere(pred == i)))
                 for i in np.unique(pred) if i}
    pairs = []
    for gi, gset in gt_sets.items():
        for pi, pset in pred_sets.items():
            inter = len(gset & pset)
            union = len(gset | pset)
            if union and inter / union > 0.5:
                pairs.append((gi, pi, inter / union))
    pairs.sort()
    matched_g = {g for g, _, _ in pairs}
    matched_p = {p for _, p, _ in pairs}
    fn = sorted(set(gt_sets) - matched_g)
    fp = sorted(set(pred_sets) - matched_p)
    return pairs, fn, fp
