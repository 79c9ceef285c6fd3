"""Evaluation metrics: per-class panoptic quality and multi-class R².

Matching follows the standard panoptic-quality definition: a ground-truth
instance and a predicted instance are a true positive iff their IoU is
strictly greater than 0.5. That threshold makes the pairing provably unique
(two segments cannot both overlap the same segment with IoU > 0.5), so no
assignment algorithm is needed; the uniqueness is asserted anyway.

Per class: DQ = TP / (TP + FP/2 + FN/2), SQ = mean IoU over TP pairs (0 when
there are none), PQ = DQ * SQ. For multiple images the TP/FP/FN tallies and
IoU sums are pooled across images per class before PQ is computed; per-image
averaging is available behind a flag. A class with no instances anywhere in
gt or pred is undefined and excluded from mPQ rather than scored.

Counts are scored with the coefficient of determination per class across
images, R2 = 1 - SS_res / SS_tot; R2_t averages the defined per-class
values. Undefined values are carried as NaN and serialized as JSON null.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mapio import CLASS_NAMES, NUM_CLASSES, validate_counts, validate_instance_map
from .reconstruct import PanopticResult


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean pixel masks; 0 if both empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


@dataclass(frozen=True)
class MatchResult:
    """Instance pairing between ground truth and prediction for one class.

    ``pairs`` holds (gt index, pred index, IoU) with IoU > 0.5; every index
    appears in at most one pair. ``unmatched_gt`` are false negatives,
    ``unmatched_pred`` false positives.
    """

    pairs: tuple[tuple[int, int, float], ...]
    unmatched_gt: tuple[int, ...]
    unmatched_pred: tuple[int, ...]

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.unmatched_pred)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gt)

    @property
    def iou_sum(self) -> float:
        return float(sum(p[2] for p in self.pairs))


def _class_restricted(x, class_id: int | None) -> np.ndarray:
    """Instance map limited to instances of one class (0 elsewhere)."""
    if isinstance(x, PanopticResult):
        labels = np.asarray(x.instances)
        if class_id is None:
            return labels
        n = int(labels.max(initial=0))
        keep = np.zeros(n + 1, dtype=bool)
        for idx, cls in x.per_instance_class.items():
            if cls == class_id and idx <= n:
                keep[idx] = True
        return np.where(keep[labels.astype(np.int64)], labels, 0)
    if class_id is not None:
        raise TypeError("class-restricted matching needs a PanopticResult, "
                        "plain instance maps carry no class information")
    labels = np.asarray(x)
    validate_instance_map(labels)
    return labels


def match_instances(gt, pred, class_id: int | None = None) -> MatchResult:
    """Pair gt and pred instances of one class by strict IoU > 0.5.

    Parameters
    ----------
    gt, pred : PanopticResult or numpy.ndarray
        Segmentations of the same image. Plain instance maps are allowed
        when ``class_id`` is None (class-agnostic matching).
    class_id : int, optional
        Restrict both sides to instances assigned this class.

    Returns
    -------
    MatchResult
    """
    g = _class_restricted(gt, class_id).astype(np.int64)
    p = _class_restricted(pred, class_id).astype(np.int64)
    if g.shape != p.shape:
        raise ValueError(f"shape mismatch: gt {g.shape} vs pred {p.shape}")

    g_areas = np.bincount(g.ravel())
    p_areas = np.bincount(p.ravel())
    gt_ids = np.flatnonzero(g_areas)
    gt_ids = gt_ids[gt_ids > 0]
    pred_ids = np.flatnonzero(p_areas)
    pred_ids = pred_ids[pred_ids > 0]

    both = (g > 0) & (p > 0)
    pairs: list[tuple[int, int, float]] = []
    matched_gt: set[int] = set()
    matched_pred: set[int] = set()
    if both.any():
        # joint histogram over overlapping pixels
        key = g[both] * (int(p.max()) + 1) + p[both]
        uniq, inter = np.unique(key, return_counts=True)
        gi = uniq // (int(p.max()) + 1)
        pi = uniq % (int(p.max()) + 1)
        for gidx, pidx, ov in zip(gi, pi, inter):
            union = g_areas[gidx] + p_areas[pidx] - ov
            value = ov / union
            if value > 0.5:
                gidx, pidx = int(gidx), int(pidx)
                # a theorem of the > 0.5 threshold; must never fire
                assert gidx not in matched_gt and pidx not in matched_pred, \
                    "IoU > 0.5 produced a double match"
                matched_gt.add(gidx)
                matched_pred.add(pidx)
                pairs.append((gidx, pidx, float(value)))

    pairs.sort()
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_gt=tuple(int(i) for i in gt_ids if int(i) not in matched_gt),
        unmatched_pred=tuple(int(i) for i in pred_ids if int(i) not in matched_pred),
    )


@dataclass(frozen=True)
class PQStats:
    """Pooled matching tallies for one class, and the derived PQ triplet."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    iou_sum: float = 0.0

    @property
    def defined(self) -> bool:
        """False when the class never occurs in gt or pred."""
        return (self.tp + self.fp + self.fn) > 0

    @property
    def dq(self) -> float:
        if not self.defined:
            return math.nan
        return self.tp / (self.tp + 0.5 * self.fp + 0.5 * self.fn)

    @property
    def sq(self) -> float:
        if not self.defined:
            return math.nan
        return self.iou_sum / self.tp if self.tp else 0.0

    @property
    def pq(self) -> float:
        if not self.defined:
            return math.nan
        return self.dq * self.sq

    def add(self, match: MatchResult) -> "PQStats":
        return PQStats(self.tp + match.tp, self.fp + match.fp,
                       self.fn + match.fn, self.iou_sum + match.iou_sum)


def pq_class(match: MatchResult) -> PQStats:
    """PQ statistics of a single MatchResult."""
    return PQStats().add(match)


@dataclass
class MetricsReport:
    """Evaluation summary: per-class PQ statistics and count R².

    Undefined entries (class absent everywhere, or zero-variance R²
    mismatch) are NaN and become null in the JSON form.
    """

    pq: dict[int, PQStats] = field(default_factory=dict)
    mpq: float = math.nan
    r2: dict[int, float] = field(default_factory=dict)
    r2_t: float = math.nan

    def to_json_dict(self) -> dict:
        def opt(value: float):
            return None if math.isnan(value) else float(value)

        per_class = {}
        for cls in range(1, NUM_CLASSES + 1):
            entry: dict = {}
            if cls in self.pq:
                stats = self.pq[cls]
                entry.update(tp=stats.tp, fp=stats.fp, fn=stats.fn,
                             dq=opt(stats.dq), sq=opt(stats.sq), pq=opt(stats.pq))
            if cls in self.r2:
                entry["r2"] = opt(self.r2[cls])
            if entry:
                per_class[CLASS_NAMES[cls - 1]] = entry
        undefined = [CLASS_NAMES[cls - 1] for cls, stats in sorted(self.pq.items())
                     if not stats.defined]
        out: dict = {"per_class": per_class}
        if self.pq:
            out["mpq"] = opt(self.mpq)
            out["undefined_classes"] = undefined
        if self.r2:
            out["r2_t"] = opt(self.r2_t)
        return out


def _mean_defined(values) -> float:
    defined = [v for v in values if not math.isnan(v)]
    if not defined:
        return math.nan
    return float(np.mean(defined))


def mpq(pairs, per_image: bool = False) -> MetricsReport:
    """Multi-class panoptic quality over a list of (gt, pred) image pairs.

    Parameters
    ----------
    pairs : list of (PanopticResult, PanopticResult)
        Ground truth and prediction per image, same dimensions per pair.
    per_image : bool
        False (default): pool TP/FP/FN and IoU sums across images per class,
        then compute one PQ per class. True: compute PQ per image per class
        and average over the images where the class is defined.

    Returns
    -------
    MetricsReport
        PQ fields filled in; R2 fields left empty.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("mpq needs at least one (gt, pred) image pair")

    per_class_matches: dict[int, list[MatchResult]] = {c: [] for c in range(1, NUM_CLASSES + 1)}
    for gt, pred in pairs:
        for cls in range(1, NUM_CLASSES + 1):
            per_class_matches[cls].append(match_instances(gt, pred, cls))

    report = MetricsReport()
    pq_values = {}
    for cls in range(1, NUM_CLASSES + 1):
        pooled = PQStats()
        for match in per_class_matches[cls]:
            pooled = pooled.add(match)
        report.pq[cls] = pooled
        if per_image:
            image_stats = [pq_class(m) for m in per_class_matches[cls]]
            image_pqs = [s.pq for s in image_stats if s.defined]
            pq_values[cls] = float(np.mean(image_pqs)) if image_pqs else math.nan
        else:
            pq_values[cls] = pooled.pq
    report.mpq = _mean_defined(pq_values.values())
    return report


def r2_class(true_values, pred_values) -> float:
    """Coefficient of determination between two equal-length sequences.

    R2 = 1 - SS_res / SS_tot. When the true values have zero variance the
    ratio is undefined: returns 1.0 on an exact match, NaN otherwise.
    """
    y = np.asarray(true_values, dtype=np.float64)
    f = np.asarray(pred_values, dtype=np.float64)
    if y.ndim != 1 or f.ndim != 1:
        raise ValueError("r2_class expects 1-D sequences")
    if y.shape != f.shape:
        raise ValueError(f"length mismatch: {y.shape[0]} vs {f.shape[0]}")
    if y.shape[0] < 2:
        raise ValueError("r2_class needs at least 2 values")
    ss_res = float(np.sum((y - f) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else math.nan
    return 1.0 - ss_res / ss_tot


def multi_r2(true_counts, pred_counts, pooled: bool = False) -> MetricsReport:
    """Multi-class R2 over per-image count vectors.

    Parameters
    ----------
    true_counts, pred_counts : sequences of CountVector
        One 6-entry vector per image, >= 2 images, aligned by position.
    pooled : bool
        False (default): R2 per class across images, R2_t = mean of the
        defined per-class values. True: R2_t computed once over all
        (image, class) values flattened together; per-class values are
        still reported.

    Returns
    -------
    MetricsReport
        R2 fields filled in; PQ fields left empty.
    """
    true_list = [np.asarray(v, dtype=np.float64) for v in true_counts]
    pred_list = [np.asarray(v, dtype=np.float64) for v in pred_counts]
    if len(true_list) != len(pred_list):
        raise ValueError(
            f"count lists differ in length: {len(true_list)} vs {len(pred_list)}")
    if len(true_list) < 2:
        raise ValueError("multi_r2 needs at least 2 images")
    for v in (*true_list, *pred_list):
        validate_counts(v)
    y = np.stack(true_list)
    f = np.stack(pred_list)

    report = MetricsReport()
    for cls in range(1, NUM_CLASSES + 1):
        report.r2[cls] = r2_class(y[:, cls - 1], f[:, cls - 1])
    if pooled:
        report.r2_t = r2_class(y.ravel(), f.ravel())
    else:
        report.r2_t = _mean_defined(report.r2.values())
    return report
