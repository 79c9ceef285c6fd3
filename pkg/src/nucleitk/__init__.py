"""Nuclei pipeline toolkit.

Direction-map encoding of instance ground truth, instance reconstruction
from predicted maps, panoptic-quality and count metrics, reference loss
values, and a seeded synthetic-nuclei generator, plus the file formats and
batch CLI tying them together.

Class IDs everywhere: 0 background, 1 neutrophil, 2 epithelial,
3 lymphocyte, 4 plasma, 5 eosinophil, 6 connective.
"""

from .directions import DirectionConfig, direction_class, encode_direction_map, \
    instance_centroids
from .losses import (
    LossBreakdown,
    LossWeights,
    combine_terms,
    count_l2,
    dice_loss,
    dir_cross_entropy,
    seg_cross_entropy,
    total_loss,
)
from .mapio import (
    BACKGROUND,
    CLASS_NAMES,
    DIRECTION_SENTINEL,
    MAX_INSTANCE_INDEX,
    NUM_CLASSES,
    NUM_SEG_CHANNELS,
    read_counts,
    read_label_map,
    read_tensor,
    validate_class_map,
    validate_counts,
    validate_direction_map,
    validate_instance_map,
    validate_prob_tensor,
    write_counts,
    write_label_map,
    write_tensor,
)
from .metrics import (
    MatchResult,
    MetricsReport,
    PQStats,
    iou,
    match_instances,
    mpq,
    multi_r2,
    pq_class,
    r2_class,
)
from .reconstruct import (
    PanopticResult,
    ReconstructionConfig,
    argmax_channels,
    assign_classes,
    connected_components,
    counts_from_instances,
    maps_from_outputs,
    postprocess_counts,
    reconstruct_instances,
)
from .render import instance_palette, render_panoptic
from .synth import Bundle, PackingError, SynthConfig, TouchingPair, generate, \
    generate_touching_pair

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND",
    "Bundle",
    "CLASS_NAMES",
    "DIRECTION_SENTINEL",
    "DirectionConfig",
    "LossBreakdown",
    "LossWeights",
    "MAX_INSTANCE_INDEX",
    "MatchResult",
    "MetricsReport",
    "NUM_CLASSES",
    "NUM_SEG_CHANNELS",
    "PQStats",
    "PackingError",
    "PanopticResult",
    "ReconstructionConfig",
    "SynthConfig",
    "TouchingPair",
    "argmax_channels",
    "assign_classes",
    "combine_terms",
    "connected_components",
    "count_l2",
    "counts_from_instances",
    "dice_loss",
    "dir_cross_entropy",
    "direction_class",
    "encode_direction_map",
    "generate",
    "generate_touching_pair",
    "instance_centroids",
    "instance_palette",
    "iou",
    "maps_from_outputs",
    "match_instances",
    "mpq",
    "multi_r2",
    "postprocess_counts",
    "pq_class",
    "r2_class",
    "read_counts",
    "read_label_map",
    "read_tensor",
    "reconstruct_instances",
    "render_panoptic",
    "seg_cross_entropy",
    "total_loss",
    "validate_class_map",
    "validate_counts",
    "validate_direction_map",
    "validate_instance_map",
    "validate_prob_tensor",
    "write_counts",
    "write_label_map",
    "write_tensor",
]
