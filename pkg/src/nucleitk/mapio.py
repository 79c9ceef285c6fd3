"""Shared data model and on-disk formats for label maps, channel tensors and counts.

All in-memory objects are plain numpy arrays with fixed conventions:

* instance map   -- 2-D uint16, 0 = background, 1..65535 = instance index
* class map      -- 2-D uint8, values 0..6 (0 = background, then the six
                    nucleus classes in ``CLASS_NAMES`` order)
* direction map  -- 2-D uint8, values 0..N-1 on foreground and the sentinel
                    255 on background (0 is a valid direction class, so the
                    background needs a value outside the class range)
* channel tensor -- 3-D float32, shape (H, W, C), channel-last
* count vector   -- 1-D float64 of length 6, one entry per nucleus class

File formats:

* label maps are single-channel PNG, 16-bit grayscale for instance maps and
  8-bit grayscale for class/direction maps
* tensors are a raw little-endian float32 payload (row-major, channel-last)
  at ``path`` plus a JSON sidecar header ``{"height", "width", "channels"}``
  at ``path + ".json"``
* counts are CSV with header ``image,neutrophil,epithelial,lymphocyte,
  plasma,eosinophil,connective``

All writers and readers are exact inverses on valid data: bitwise for
tensors, valuewise for maps and counts.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

#: Class-ID convention. Metrics, counts and the CSV column order all depend
#: on it: 1=neutrophil, 2=epithelial, 3=lymphocyte, 4=plasma, 5=eosinophil,
#: 6=connective; 0 is background.
CLASS_NAMES = ("neutrophil", "epithelial", "lymphocyte", "plasma",
               "eosinophil", "connective")
NUM_CLASSES = 6
NUM_SEG_CHANNELS = 7  # background channel + one channel per class

BACKGROUND = 0
DIRECTION_SENTINEL = 255
MAX_INSTANCE_INDEX = 65535

COUNTS_HEADER = ("image",) + CLASS_NAMES

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_LABEL_KINDS = ("instance", "class", "direction")


def _first_offender(bad: np.ndarray) -> tuple[int, int]:
    """Raster-order coordinates of the first True pixel in a boolean grid."""
    flat = int(np.argmax(bad))
    row, col = np.unravel_index(flat, bad.shape)
    return int(row), int(col)


def validate_instance_map(labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"instance map must be 2-D, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"instance map must be integer-typed, got {labels.dtype}")
    if labels.size and (labels.min() < 0 or labels.max() > MAX_INSTANCE_INDEX):
        bad = (labels < 0) | (labels > MAX_INSTANCE_INDEX)
        r, c = _first_offender(bad)
        raise ValueError(
            f"instance index out of range: value {int(labels[r, c])} at pixel ({r}, {c})")


def validate_class_map(labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"class map must be 2-D, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"class map must be integer-typed, got {labels.dtype}")
    bad = (labels < 0) | (labels > NUM_CLASSES)
    if bad.any():
        r, c = _first_offender(bad)
        raise ValueError(
            f"class ID out of range: value {int(labels[r, c])} at pixel ({r}, {c})")


def validate_direction_map(labels: np.ndarray, n_directions: int | None = None) -> None:
    """Check a direction map: all values < n_directions or the 255 sentinel.

    If ``n_directions`` is None only the sentinel convention is checked (no
    upper bound on the class values can be enforced without N).
    """
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"direction map must be 2-D, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"direction map must be integer-typed, got {labels.dtype}")
    if n_directions is not None:
        if n_directions < 2:
            raise ValueError(f"n_directions must be >= 2, got {n_directions}")
        bad = (labels != DIRECTION_SENTINEL) & ((labels < 0) | (labels >= n_directions))
    else:
        bad = (labels < 0) | (labels > DIRECTION_SENTINEL)
    if bad.any():
        r, c = _first_offender(bad)
        raise ValueError(
            f"direction class out of range: value {int(labels[r, c])} at pixel ({r}, {c})")


def validate_prob_tensor(values: np.ndarray, normalized: bool = False) -> None:
    """Check a channel tensor: 3-D, finite, optionally per-pixel normalized.

    ``normalized`` requires every value >= 0 and every per-pixel channel sum
    within 1e-5 of 1.
    """
    values = np.asarray(values)
    if values.ndim != 3:
        raise ValueError(f"tensor must be 3-D (H, W, C), got shape {values.shape}")
    if values.shape[2] < 1:
        raise ValueError("tensor must have at least one channel")
    if not np.isfinite(values).all():
        raise ValueError("tensor contains non-finite values")
    if normalized:
        if values.size and values.min() < 0:
            raise ValueError("normalized tensor has negative values")
        sums = values.sum(axis=2, dtype=np.float64)
        if np.abs(sums - 1.0).max(initial=0.0) > 1e-5:
            raise ValueError("tensor is not normalized: per-pixel channel sums deviate from 1")


def validate_counts(counts: np.ndarray) -> None:
    counts = np.asarray(counts, dtype=np.float64)
    if counts.shape != (NUM_CLASSES,):
        raise ValueError(f"count vector must have {NUM_CLASSES} entries, got shape {counts.shape}")
    if not np.isfinite(counts).all():
        raise ValueError("count vector contains non-finite values")


def _png_header(path: Path) -> tuple[int, int]:
    """Return (bit_depth, color_type) from a PNG file's IHDR chunk."""
    with open(path, "rb") as fh:
        head = fh.read(26)
    if len(head) < 26 or head[:8] != _PNG_MAGIC or head[12:16] != b"IHDR":
        raise ValueError(f"{path}: not a PNG file")
    return head[24], head[25]


def read_label_map(path, kind: str, n_directions: int | None = None) -> np.ndarray:
    """Read a label-map PNG and validate it against its kind's invariants.

    Parameters
    ----------
    path : str or Path
        Single-channel PNG: 16-bit grayscale for ``kind="instance"``,
        8-bit grayscale for ``kind="class"`` or ``kind="direction"``.
    kind : {"instance", "class", "direction"}
    n_directions : int, optional
        When reading a direction map, also check class values against N.

    Returns
    -------
    numpy.ndarray
        uint16 grid for instance maps, uint8 for class/direction maps.
    """
    if kind not in _LABEL_KINDS:
        raise ValueError(f"unknown label-map kind {kind!r}, expected one of {_LABEL_KINDS}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"label map not found: {path}")
    depth, color = _png_header(path)
    want_depth = 16 if kind == "instance" else 8
    if color != 0:
        raise ValueError(f"{path}: expected grayscale PNG (color type 0), got color type {color}")
    if depth != want_depth:
        raise ValueError(
            f"{path}: expected {want_depth}-bit PNG for {kind} map, got {depth}-bit")
    with Image.open(path) as img:
        arr = np.asarray(img)
    if kind == "instance":
        arr = arr.astype(np.uint16, copy=False)
        validate_instance_map(arr)
    elif kind == "class":
        arr = arr.astype(np.uint8, copy=False)
        validate_class_map(arr)
    else:
        arr = arr.astype(np.uint8, copy=False)
        validate_direction_map(arr, n_directions)
    return arr.copy()


def write_label_map(labels: np.ndarray, path, kind: str,
                    n_directions: int | None = None) -> None:
    """Write a label map as a single-channel PNG (16-bit for instance maps).

    The map is validated first; the file decodes back to an identical grid.
    """
    if kind not in _LABEL_KINDS:
        raise ValueError(f"unknown label-map kind {kind!r}, expected one of {_LABEL_KINDS}")
    labels = np.asarray(labels)
    if kind == "instance":
        validate_instance_map(labels)
        out = labels.astype(np.uint16)
    elif kind == "class":
        validate_class_map(labels)
        out = labels.astype(np.uint8)
    else:
        validate_direction_map(labels, n_directions)
        out = labels.astype(np.uint8)
    Image.fromarray(out).save(Path(path), format="PNG")


def tensor_header_path(path) -> Path:
    return Path(str(path) + ".json")


def write_tensor(values: np.ndarray, path) -> None:
    """Write a float32 tensor: raw LE payload at ``path``, JSON header sidecar.

    Payload layout is row-major, channel-last, so a (H, W, C) tensor is
    exactly H*W*C*4 bytes.
    """
    values = np.asarray(values)
    validate_prob_tensor(values)
    h, w, c = values.shape
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    Path(path).write_bytes(payload)
    header = {"height": int(h), "width": int(w), "channels": int(c)}
    tensor_header_path(path).write_text(json.dumps(header) + "\n")


def read_tensor(path) -> np.ndarray:
    """Read a tensor written by :func:`write_tensor`, bit-exactly."""
    path = Path(path)
    header_path = tensor_header_path(path)
    if not path.is_file():
        raise FileNotFoundError(f"tensor payload not found: {path}")
    if not header_path.is_file():
        raise FileNotFoundError(f"tensor header not found: {header_path}")
    header = json.loads(header_path.read_text())
    try:
        h, w, c = int(header["height"]), int(header["width"]), int(header["channels"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{header_path}: malformed tensor header") from exc
    payload = path.read_bytes()
    expected = h * w * c * 4
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    values = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    if not np.isfinite(values).all():
        raise ValueError(f"{path}: tensor contains non-finite values")
    return values.astype(np.float32, copy=True)


def _format_count(value: float) -> str:
    if math.isfinite(value) and value == int(value):
        return str(int(value))
    return repr(float(value))


def write_counts(rows, path) -> None:
    """Write ``(image_id, counts)`` rows as a counts CSV, order preserved."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COUNTS_HEADER)
        for image_id, counts in rows:
            counts = np.asarray(counts, dtype=np.float64)
            validate_counts(counts)
            writer.writerow([str(image_id)] + [_format_count(v) for v in counts])


def read_counts(path) -> list[tuple[str, np.ndarray]]:
    """Read a counts CSV into an ordered list of (image id, float64 vector)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"counts file not found: {path}")
    out: list[tuple[str, np.ndarray]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty counts file, expected header row") from None
        if tuple(header) != COUNTS_HEADER:
            raise ValueError(
                f"{path}: bad header {header!r}, expected {','.join(COUNTS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COUNTS_HEADER):
                raise ValueError(
                    f"{path}: line {lineno}: expected {len(COUNTS_HEADER)} columns, got {len(row)}")
            try:
                counts = np.array([float(v) for v in row[1:]], dtype=np.float64)
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: non-numeric count") from exc
            validate_counts(counts)
            out.append((row[0], counts))
    return out
