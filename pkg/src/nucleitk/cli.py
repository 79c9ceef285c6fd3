"""Batch command line for the nuclei pipeline.

Subcommands:

* ``encode``  instance-map PNG(s) -> direction-map PNG(s)
* ``decode``  class + direction sources (hard-map PNGs or ``.f32`` tensors)
              -> instance/class PNGs and a counts CSV
* ``eval``    gt and pred directories -> metrics report JSON
* ``counts``  raw regression CSV -> integer counts CSV
* ``synth``   seeded synthetic bundles -> PNGs and counts CSV
* ``render``  instance map (optionally class map) -> color PNG
* ``loss``    predictions vs ground truth -> loss breakdown JSON

Tensor files use the raw float32 format (``<name>.f32`` plus the
``<name>.f32.json`` header). Directory inputs are paired by file stem, and a
stem present on one side but not the other is an error, never a silent skip.
Batch work runs per image; ``--jobs K`` parallelizes it while keeping every
output byte-identical to a serial run (results are collected in input
order). Exit status is 0 only when every file processed cleanly; failures
are listed on stderr, one line per file.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from .directions import DirectionConfig, encode_direction_map
from .losses import LossWeights, total_loss
from .mapio import (
    BACKGROUND,
    DIRECTION_SENTINEL,
    NUM_CLASSES,
    NUM_SEG_CHANNELS,
    read_counts,
    read_label_map,
    read_tensor,
    write_counts,
    write_label_map,
)
from .metrics import mpq, multi_r2
from .reconstruct import (
    ReconstructionConfig,
    argmax_channels,
    assign_classes,
    counts_from_instances,
    maps_from_outputs,
    postprocess_counts,
    reconstruct_instances,
)
from .render import render_panoptic
from .synth import SynthConfig, generate


class CliError(Exception):
    """User-facing command failure (bad paths, unpairable inputs, ...)."""


_INPUT_SUFFIXES = (".png", ".f32")


def _stem(path: Path) -> str:
    return path.name[:-len(path.suffix)] if path.suffix else path.name


def _discover(path: Path) -> list[Path]:
    """A single file, or the sorted .png/.f32 files of a directory."""
    if path.is_file():
        return [path]
    if path.is_dir():
        files = sorted(p for p in path.iterdir()
                       if p.is_file() and p.suffix in _INPUT_SUFFIXES)
        if not files:
            raise CliError(f"no {' or '.join(_INPUT_SUFFIXES)} inputs in {path}")
        return files
    raise CliError(f"input not found: {path}")


def _pair_by_stem(left: list[Path], right: list[Path],
                  left_name: str, right_name: str) -> list[tuple[str, Path, Path]]:
    """Match two file lists by stem; any one-sided stem is an error."""
    if len(left) == 1 and len(right) == 1:
        return [(_stem(left[0]), left[0], right[0])]
    lmap = {_stem(p): p for p in left}
    rmap = {_stem(p): p for p in right}
    if len(lmap) != len(left):
        raise CliError(f"duplicate stems among {left_name} inputs")
    if len(rmap) != len(right):
        raise CliError(f"duplicate stems among {right_name} inputs")
    missing_r = sorted(set(lmap) - set(rmap))
    missing_l = sorted(set(rmap) - set(lmap))
    problems = []
    if missing_r:
        problems.append(f"no {right_name} for: {', '.join(missing_r)}")
    if missing_l:
        problems.append(f"no {left_name} for: {', '.join(missing_l)}")
    if problems:
        raise CliError("unpaired inputs: " + "; ".join(problems))
    return [(stem, lmap[stem], rmap[stem]) for stem in sorted(lmap)]


def _run_batch(tasks, jobs: int) -> list[tuple[str, object, str | None]]:
    """Run (name, thunk) tasks, serially or in a pool.

    Results come back in task order regardless of completion order, so any
    downstream writing is deterministic. Returns (name, payload, error).
    """

    def call(fn):
        try:
            return fn(), None
        except Exception as exc:  # per-file isolation
            return None, f"{type(exc).__name__}: {exc}"

    out = []
    if jobs <= 1:
        for name, fn in tasks:
            payload, err = call(fn)
            out.append((name, payload, err))
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [(name, pool.submit(call, fn)) for name, fn in tasks]
            for name, fut in futures:
                payload, err = fut.result()
                out.append((name, payload, err))
    return out


def _report_failures(results) -> int:
    failed = [(name, err) for name, _, err in results if err is not None]
    for name, err in failed:
        print(f"error: {name}: {err}", file=sys.stderr)
    return 1 if failed else 0


def _ensure_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_weights(text: str) -> LossWeights:
    parts = text.split(",")
    if len(parts) != 4:
        raise CliError(f"--weights needs 4 comma-separated values, got {text!r}")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise CliError(f"--weights values must be numbers, got {text!r}") from None
    return LossWeights(*values)


def _parse_vector(text: str, flag: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != NUM_CLASSES:
        raise CliError(f"{flag} needs {NUM_CLASSES} comma-separated values, got {text!r}")
    try:
        return np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError:
        raise CliError(f"{flag} values must be numbers, got {text!r}") from None


def _parse_range(text: str, flag: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise CliError(f"{flag} needs MIN,MAX, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise CliError(f"{flag} values must be numbers, got {text!r}") from None


def _write_json(data: dict, out: str | None) -> None:
    text = json.dumps(data, indent=2) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# ---------------------------------------------------------------- encode


def cmd_encode(args) -> int:
    inputs: list[Path] = []
    for raw in args.inputs:
        inputs.extend(_discover(Path(raw)))
    dcfg = DirectionConfig(n_directions=args.directions)
    out = Path(args.out)
    single_file_out = len(inputs) == 1 and not out.is_dir() and bool(out.suffix)
    if not single_file_out:
        _ensure_dir(out)

    def task(src: Path, dst: Path):
        def run():
            labels = read_label_map(src, "instance")
            write_label_map(encode_direction_map(labels, dcfg), dst, "direction",
                            dcfg.n_directions)
        return run

    tasks = []
    for src in inputs:
        dst = out if single_file_out else out / src.name
        tasks.append((str(src), task(src, dst)))
    return _report_failures(_run_batch(tasks, args.jobs))


# ---------------------------------------------------------------- decode


def _load_hard_maps(seg_path: Path, dir_path: Path,
                    rcfg: ReconstructionConfig) -> tuple[np.ndarray, np.ndarray]:
    seg_is_tensor = seg_path.suffix == ".f32"
    dir_is_tensor = dir_path.suffix == ".f32"
    if seg_is_tensor and dir_is_tensor:
        return maps_from_outputs(read_tensor(seg_path), read_tensor(dir_path), rcfg)
    if seg_is_tensor:
        seg = read_tensor(seg_path)
        if seg.shape[2] != NUM_SEG_CHANNELS:
            raise CliError(f"{seg_path}: segmentation tensor needs "
                           f"{NUM_SEG_CHANNELS} channels, got {seg.shape[2]}")
        class_map = argmax_channels(seg).astype(np.uint8)
    else:
        class_map = read_label_map(seg_path, "class")
    if dir_is_tensor:
        tensor = read_tensor(dir_path)
        if tensor.shape[:2] != class_map.shape:
            raise CliError(f"{dir_path}: shape {tensor.shape[:2]} does not match "
                           f"class map {class_map.shape}")
        if tensor.shape[2] != rcfg.n_directions:
            raise CliError(f"{dir_path}: direction tensor has {tensor.shape[2]} "
                           f"channels, --directions says {rcfg.n_directions}")
        dir_map = np.full(class_map.shape, DIRECTION_SENTINEL, dtype=np.uint8)
        fg = class_map != BACKGROUND
        dir_map[fg] = argmax_channels(tensor)[fg].astype(np.uint8)
    else:
        dir_map = read_label_map(dir_path, "direction", rcfg.n_directions)
    return class_map, dir_map


def cmd_decode(args) -> int:
    rcfg = ReconstructionConfig(connectivity=args.connectivity,
                                n_directions=args.directions)
    pairs = _pair_by_stem(_discover(Path(args.seg)), _discover(Path(args.dir)),
                          "--seg", "--dir")
    out = _ensure_dir(Path(args.out))

    def task(stem: str, seg_path: Path, dir_path: Path):
        def run():
            class_map, dir_map = _load_hard_maps(seg_path, dir_path, rcfg)
            instances = reconstruct_instances(class_map, dir_map, rcfg)
            result = assign_classes(instances, class_map)
            write_label_map(result.instances, out / f"{stem}_instances.png", "instance")
            write_label_map(result.classes, out / f"{stem}_classes.png", "class")
            return counts_from_instances(result)
        return run

    results = _run_batch([(stem, task(stem, s, d)) for stem, s, d in pairs], args.jobs)
    rows = [(name, counts) for name, counts, err in results if err is None]
    write_counts(rows, out / "counts.csv")
    return _report_failures(results)


# ---------------------------------------------------------------- eval


def _panoptic_inputs(root: Path) -> dict[str, tuple[Path, Path]]:
    """Stems of a directory holding <stem>_instances.png + <stem>_classes.png."""
    if not root.is_dir():
        raise CliError(f"not a directory: {root}")
    out: dict[str, tuple[Path, Path]] = {}
    for inst in sorted(root.glob("*_instances.png")):
        stem = inst.name[:-len("_instances.png")]
        cls = root / f"{stem}_classes.png"
        if not cls.is_file():
            raise CliError(f"{root}: {inst.name} has no matching {cls.name}")
        out[stem] = (inst, cls)
    if not out:
        raise CliError(f"{root}: no *_instances.png files")
    return out


def cmd_eval(args) -> int:
    gt_root, pred_root = Path(args.gt), Path(args.pred)
    gt_inputs = _panoptic_inputs(gt_root)
    pred_inputs = _panoptic_inputs(pred_root)
    only_gt = sorted(set(gt_inputs) - set(pred_inputs))
    only_pred = sorted(set(pred_inputs) - set(gt_inputs))
    if only_gt or only_pred:
        raise CliError("unpaired images: "
                       + "; ".join(filter(None, [
                           f"missing predictions for {', '.join(only_gt)}" if only_gt else "",
                           f"missing ground truth for {', '.join(only_pred)}" if only_pred else ""])))
    stems = sorted(gt_inputs)

    def load(stem: str):
        def run():
            gt_res = assign_classes(read_label_map(gt_inputs[stem][0], "instance"),
                                    read_label_map(gt_inputs[stem][1], "class"))
            pred_res = assign_classes(read_label_map(pred_inputs[stem][0], "instance"),
                                      read_label_map(pred_inputs[stem][1], "class"))
            return gt_res, pred_res
        return run

    results = _run_batch([(stem, load(stem)) for stem in stems], args.jobs)
    status = _report_failures(results)
    if status:
        return status
    report = mpq([payload for _, payload, _ in results], per_image=args.per_image)

    gt_csv, pred_csv = gt_root / "counts.csv", pred_root / "counts.csv"
    if gt_csv.is_file() and pred_csv.is_file():
        gt_rows = read_counts(gt_csv)
        pred_rows = dict(read_counts(pred_csv))
        missing = [name for name, _ in gt_rows if name not in pred_rows]
        if missing:
            raise CliError(f"counts.csv: no predicted counts for {', '.join(missing)}")
        extra = sorted(set(pred_rows) - {name for name, _ in gt_rows})
        if extra:
            raise CliError(f"counts.csv: predicted counts for unknown images "
                           f"{', '.join(extra)}")
        r2_report = multi_r2([v for _, v in gt_rows],
                             [pred_rows[name] for name, _ in gt_rows],
                             pooled=args.pooled_r2)
        report.r2 = r2_report.r2
        report.r2_t = r2_report.r2_t
    elif gt_csv.is_file() != pred_csv.is_file():
        raise CliError("counts.csv present on one side only")

    _write_json(report.to_json_dict(), args.out)
    return 0


# ---------------------------------------------------------------- counts


def cmd_counts(args) -> int:
    rows = read_counts(Path(args.input))
    write_counts([(name, postprocess_counts(vec)) for name, vec in rows],
                 Path(args.out))
    return 0


# ---------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    overrides = {}
    if args.config:
        try:
            overrides.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read --config: {exc}") from exc
    if args.height is not None:
        overrides["height"] = args.height
    if args.width is not None:
        overrides["width"] = args.width
    if args.nuclei is not None:
        overrides["n_nuclei"] = args.nuclei
    if args.radius is not None:
        overrides["radius_range"] = _parse_range(args.radius, "--radius")
    if args.eccentricity is not None:
        overrides["eccentricity_range"] = _parse_range(args.eccentricity,
                                                       "--eccentricity")
    if args.touching:
        overrides["allow_touching"] = True
    if args.class_weights is not None:
        overrides["class_weights"] = tuple(
            _parse_vector(args.class_weights, "--class-weights"))
    for key in ("radius_range", "eccentricity_range", "class_weights"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    base_seed = overrides.pop("seed", 0) if args.seed is None else args.seed
    dcfg = DirectionConfig(n_directions=args.directions)
    out = _ensure_dir(Path(args.out))

    def task(index: int, stem: str):
        def run():
            # image i draws from seed + i so a corpus is one flag away
            try:
                config = SynthConfig(seed=base_seed + index, **overrides)
            except TypeError as exc:
                raise CliError(f"bad synth config: {exc}") from exc
            bundle = generate(config, dcfg)
            write_label_map(bundle.instances, out / f"{stem}_instances.png", "instance")
            write_label_map(bundle.classes, out / f"{stem}_classes.png", "class")
            write_label_map(bundle.directions, out / f"{stem}_directions.png",
                            "direction", dcfg.n_directions)
            return bundle.counts
        return run

    stems = [f"synth_{i:04d}" for i in range(args.images)]
    results = _run_batch([(stem, task(i, stem)) for i, stem in enumerate(stems)],
                         args.jobs)
    rows = [(name, counts) for name, counts, err in results if err is None]
    write_counts(rows, out / "counts.csv")
    return _report_failures(results)


# ---------------------------------------------------------------- render


def cmd_render(args) -> int:
    instances = read_label_map(Path(args.instances), "instance")
    classes = read_label_map(Path(args.classes), "class") if args.classes else None
    image = render_panoptic(instances, classes)
    Image.fromarray(image, mode="RGB").save(Path(args.out), format="PNG")
    return 0


# ---------------------------------------------------------------- loss


def cmd_loss(args) -> int:
    weights = _parse_weights(args.weights)
    seg_pred = read_tensor(Path(args.seg_pred))
    dir_pred = read_tensor(Path(args.dir_pred))
    class_gt = read_label_map(Path(args.classes), "class")
    direction_gt = read_label_map(Path(args.directions_map), "direction",
                                  dir_pred.shape[2] if dir_pred.ndim == 3 else None)
    pred_counts = _parse_vector(args.pred_counts, "--pred-counts")
    gt_counts = _parse_vector(args.gt_counts, "--gt-counts")
    breakdown = total_loss(seg_pred, class_gt, dir_pred, direction_gt,
                           pred_counts, gt_counts, weights)
    _write_json(breakdown.to_json_dict(), args.out)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nucleitk",
        description="Direction-map encoding, instance reconstruction and "
                    "panoptic evaluation for nuclei pipelines.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, jobs=True, directions=True):
        if directions:
            p.add_argument("--directions", type=int, default=4, metavar="N",
                           help="number of direction classes (default 4)")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, metavar="K",
                           help="parallel workers; output is byte-identical "
                                "to a serial run (default 1)")

    p = sub.add_parser("encode", help="instance maps -> direction maps")
    p.add_argument("inputs", nargs="+", help="instance-map PNG file(s) or directory")
    p.add_argument("--out", required=True, help="output file or directory")
    add_common(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode",
                       help="class + direction maps/tensors -> instances, counts")
    p.add_argument("--seg", required=True,
                   help="class-map PNG(s) or 7-channel .f32 tensor(s)")
    p.add_argument("--dir", required=True,
                   help="direction-map PNG(s) or N-channel .f32 tensor(s)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=4,
                   help="component/merge adjacency (default 4)")
    add_common(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth directory")
    p.add_argument("--pred", required=True, help="prediction directory")
    p.add_argument("--out", help="report JSON path (default stdout)")
    p.add_argument("--per-image", action="store_true",
                   help="average PQ per image instead of pooling statistics")
    p.add_argument("--pooled-r2", action="store_true",
                   help="single pooled R2 instead of the per-class mean")
    add_common(p, directions=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("counts", help="raw regression counts -> integer counts")
    p.add_argument("input", help="raw counts CSV")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_counts)

    p = sub.add_parser("synth", help="generate synthetic ground-truth bundles")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--images", type=int, default=1, metavar="M",
                   help="number of images (default 1)")
    p.add_argument("--seed", type=int, default=None, metavar="S",
                   help="base seed; image i uses seed S+i (default 0, or the "
                        "config file's seed)")
    p.add_argument("--config", help="JSON file with generator settings")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--nuclei", type=int, help="nuclei per image")
    p.add_argument("--radius", metavar="MIN,MAX", help="semi-major axis range")
    p.add_argument("--eccentricity", metavar="MIN,MAX")
    p.add_argument("--touching", action="store_true",
                   help="allow nuclei to share boundaries")
    p.add_argument("--class-weights", metavar="W1,...,W6",
                   help="sampling weights for the 6 classes")
    add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", help="color rendering of an instance map")
    p.add_argument("instances", help="instance-map PNG")
    p.add_argument("--classes", help="class-map PNG for class-anchored hues")
    p.add_argument("--out", required=True, help="output RGB PNG")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("loss", help="loss breakdown of one prediction")
    p.add_argument("--seg-pred", required=True, help="7-channel .f32 tensor")
    p.add_argument("--dir-pred", required=True, help="N-channel .f32 tensor")
    p.add_argument("--classes", required=True, help="ground-truth class PNG")
    p.add_argument("--directions-map", required=True,
                   help="ground-truth direction PNG")
    p.add_argument("--pred-counts", required=True, metavar="C1,...,C6")
    p.add_argument("--gt-counts", required=True, metavar="C1,...,C6")
    p.add_argument("--weights", default="1.0,4.0,2.0,0.005", metavar="a,b,c,d",
                   help="term weights (default 1.0,4.0,2.0,0.005)")
    p.add_argument("--out", help="report JSON path (default stdout)")
    p.set_defaults(func=cmd_loss)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
