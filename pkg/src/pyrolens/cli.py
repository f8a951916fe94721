"""Operator-facing command line.

Exit codes: 0 success, 1 processing failure, 2 usage or input error.
Every command that writes files drops a reproducible manifest next to
them; ``pyrolens rerun manifest.json`` replays the stored arguments.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .backends import (
    BACKEND_CMD_ENV,
    BackendError,
    MockClassifier,
    MockDetector,
    MockScript,
    SubprocessBackend,
)
from .boxes import Source, dump_detections, load_detections
from .cascade import CascadeConfig, FrameError, result_to_obj, run_sequence
from .dataset_io import (
    LabelError,
    NegativeSampling,
    build_crops,
    convert_dataset_gray,
    dataset_stats,
    format_stats_table,
    index_dataset,
    load_ground_truth,
    write_report,
)
from .evaluation import EvalError, evaluate, pr_curve
from .image_io import read_image, write_image
from .imaging import EdgeConfig, edge_enhance, rgb_to_gray
from .manifest import StageTimer, load_manifest, write_manifest
from .tiling import plan_tiles


class InputError(Exception):
    """Bad paths, unreadable files, malformed flags: exit code 2."""


EDGE_FLAGS = (
    "sigma",
    "ksize",
    "canny_low",
    "canny_high",
    "weight_laplacian",
    "weight_canny",
    "operator",
    "order",
)


def _edge_config(opts: dict) -> EdgeConfig:
    base = EdgeConfig()
    if opts.get("edge_config"):
        path = Path(opts["edge_config"])
        if not path.is_file():
            raise InputError(f"edge config not found: {path}")
        base = EdgeConfig.from_text(path.read_text(encoding="utf-8"))
    overrides = {k: opts[k] for k in EDGE_FLAGS if opts.get(k) is not None}
    try:
        return dataclasses.replace(base, **overrides) if overrides else base
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _parse_patch(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        if len(parts) == 1:
            v = int(parts[0])
            return v, v
        if len(parts) == 2:
            return int(parts[0]), int(parts[1])
    except ValueError:
        pass
    raise InputError(f"--patch expects SIZE or WxH, got {text!r}")


def _parse_overlap(text: str) -> tuple[float, float]:
    parts = text.split(",")
    try:
        if len(parts) == 1:
            v = float(parts[0])
            return v, v
        if len(parts) == 2:
            return float(parts[0]), float(parts[1])
    except ValueError:
        pass
    raise InputError(f"--overlap expects X or X,Y, got {text!r}")


def _resolve_frames(source: str) -> list[tuple[str, Path]]:
    path = Path(source)
    if path.is_dir():
        files = sorted(
            p for p in path.iterdir() if p.suffix.lower() in (".png", ".pgm")
        )
    elif path.is_file():
        files = []
        for line in path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line:
                files.append(Path(line) if Path(line).is_absolute() else path.parent / line)
        missing = [str(f) for f in files if not f.is_file()]
        if missing:
            raise InputError(f"frame list references missing files: {', '.join(missing)}")
    else:
        raise InputError(f"frame source not found: {source}")
    if not files:
        return []
    return [(f.stem, f) for f in files]


def _make_backends(opts: dict):
    """Detector and classifier per flags: subprocess commands first, then
    the scripted mock."""
    backend_cmd = opts.get("backend_cmd") or os.environ.get(BACKEND_CMD_ENV)
    classifier_cmd = opts.get("classifier_cmd")
    script = (
        MockScript.from_file(opts["mock_script"]) if opts.get("mock_script") else MockScript()
    )
    script.seed = opts.get("seed") or 0
    closers = []
    try:
        if backend_cmd:
            det = SubprocessBackend(backend_cmd, timeout=opts.get("timeout") or 10.0)
            closers.append(det)
            det.handshake()
        else:
            det = MockDetector(script)
        if classifier_cmd:
            cls = SubprocessBackend(classifier_cmd, timeout=opts.get("timeout") or 10.0)
            closers.append(cls)
            cls.handshake()
        elif backend_cmd and "classify" in det.info.ops:
            cls = det
        else:
            cls = MockClassifier(script)
    except BaseException:
        for backend in closers:
            backend.close()
        raise
    return det, cls, closers


def _annotate(img: np.ndarray, detections) -> np.ndarray:
    rgb = np.stack([img] * 3, axis=-1) if img.ndim == 2 else img.copy()
    h, w = rgb.shape[:2]
    for det in detections:
        color = (255, 48, 16) if det.source is Source.DIRECT else (255, 200, 0)
        x0, y0 = max(int(det.box.x), 0), max(int(det.box.y), 0)
        x1, y1 = min(int(det.box.x2), w), min(int(det.box.y2), h)
        if x1 <= x0 or y1 <= y0:
            continue
        t = 2
        rgb[y0 : min(y0 + t, y1), x0:x1] = color
        rgb[max(y1 - t, y0) : y1, x0:x1] = color
        rgb[y0:y1, x0 : min(x0 + t, x1)] = color
        rgb[y0:y1, max(x1 - t, x0) : x1] = color
    return rgb


def _json_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True)


# --------------------------------------------------------------------------
# Commands (each takes the resolved argument dict so `rerun` can replay it)


def cmd_edges(opts: dict) -> int:
    src = Path(opts["input"])
    if not src.is_file():
        raise InputError(f"input image not found: {src}")
    cfg = _edge_config(opts)
    timer = StageTimer()
    img = read_image(src)
    gray = rgb_to_gray(img) if img.ndim == 3 else img
    timer.mark("load")
    out = edge_enhance(gray, cfg)
    timer.mark("enhance")
    dst = Path(opts["output"])
    dst.parent.mkdir(parents=True, exist_ok=True)
    write_image(dst, out)
    if opts.get("save_config"):
        Path(opts["save_config"]).write_text(cfg.to_text(), encoding="utf-8")
    timer.mark("write")
    write_manifest(
        dst.with_suffix(dst.suffix + ".manifest.json"),
        "edges", _manifest_args(opts), [str(src)], [str(dst)], timer.timing,
    )
    return 0


def cmd_detect(opts: dict) -> int:
    frames = _resolve_frames(opts["frames"])
    out_dir = Path(opts["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    annotate_dir: Optional[Path] = Path(opts["annotate"]) if opts.get("annotate") else None
    if annotate_dir:
        annotate_dir.mkdir(parents=True, exist_ok=True)
    patch_w, patch_h = _parse_patch(opts.get("patch") or "640")
    overlap_x, overlap_y = _parse_overlap(opts.get("overlap") or "0.2")
    cfg = CascadeConfig(
        tau_detect=opts.get("tau_detect", 0.6),
        tau_classify=opts.get("tau_classify", 0.6),
        use_patching=bool(opts.get("patched")),
        patch_w=patch_w,
        patch_h=patch_h,
        overlap_x=overlap_x,
        overlap_y=overlap_y,
        nms_iou=opts.get("nms_iou", 0.5),
        edge=_edge_config(opts),
        keep_no_fire=bool(opts.get("keep_no_fire")),
    )
    timer = StageTimer()
    detector, classifier, closers = _make_backends(opts)
    timer.mark("handshake")
    results_path = out_dir / "results.jsonl"
    predictions_dir: Optional[Path] = Path(opts["predictions"]) if opts.get("predictions") else None
    if predictions_dir:
        predictions_dir.mkdir(parents=True, exist_ok=True)
    frame_paths = dict(frames)
    failures = 0
    try:
        def frame_source():
            for stem, path in frames:
                yield stem, read_image(path)

        with open(results_path, "w", encoding="utf-8") as fh:
            for frame_id, result in run_sequence(
                frame_source(), detector, classifier, cfg,
                fail_fast=bool(opts.get("fail_fast")), jobs=opts.get("jobs") or 1,
            ):
                fh.write(_json_line(result_to_obj(frame_id, result)) + "\n")
                if isinstance(result, FrameError):
                    failures += 1
                    print(f"frame {frame_id}: {result.message}", file=sys.stderr)
                    continue
                if predictions_dir is not None:
                    (predictions_dir / f"{frame_id}.json").write_text(
                        dump_detections(result.detections) + "\n", encoding="utf-8"
                    )
                if annotate_dir is not None:
                    img = read_image(frame_paths[frame_id])
                    write_image(annotate_dir / f"{frame_id}.png", _annotate(img, result.detections))
    finally:
        for backend in closers:
            backend.close()
    timer.mark("frames")
    outputs = [str(results_path)]
    write_manifest(out_dir / "manifest.json", "detect", _manifest_args(opts),
                   [str(p) for _, p in frames], outputs, timer.timing)
    return 1 if failures else 0


def cmd_evaluate(opts: dict) -> int:
    gt_root = Path(opts["ground_truth"])
    pred_dir = Path(opts["predictions"])
    if not pred_dir.is_dir():
        raise InputError(f"predictions directory not found: {pred_dir}")
    timer = StageTimer()
    try:
        index = index_dataset(gt_root)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc
    gts = load_ground_truth(index)
    preds = {}
    for f in sorted(pred_dir.glob("*.json")):
        if f.name.endswith(".manifest.json"):
            continue
        preds[f.stem] = load_detections(f.read_text(encoding="utf-8"))
    timer.mark("load")
    interpolation = "coco101" if opts.get("coco_interp") else "none"
    report = evaluate(preds, gts, interpolation=interpolation)
    timer.mark("evaluate")
    out_dir = Path(opts["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    table = report.table(opts.get("method") or "predictions")
    (out_dir / "report.txt").write_text(table, encoding="utf-8")
    outputs = [str(out_dir / "report.json"), str(out_dir / "report.txt")]
    if opts.get("pr_csv"):
        for category in sorted({c for boxes in gts.values() for c, _ in boxes}):
            csv_path = out_dir / f"pr_category{category}_iou50.csv"
            csv_path.write_text(pr_curve(preds, gts, category, 0.5).to_csv(), encoding="utf-8")
            outputs.append(str(csv_path))
    timer.mark("write")
    write_manifest(out_dir / "manifest.json", "evaluate", _manifest_args(opts),
                   [str(gt_root), str(pred_dir)], outputs, timer.timing)
    print(table, end="")
    return 0


def cmd_convert_gray(opts: dict) -> int:
    src = Path(opts["src"])
    if not src.is_dir():
        raise InputError(f"source directory not found: {src}")
    timer = StageTimer()
    report = convert_dataset_gray(src, Path(opts["dst"]))
    timer.mark("convert")
    report_path = Path(opts["dst"]) / "convert_report.json"
    write_report(report_path, report.to_obj())
    write_manifest(Path(opts["dst"]) / "manifest.json", "convert-gray", _manifest_args(opts),
                   [str(src)], [str(report_path)], timer.timing)
    print(f"converted {report.converted} images, copied {report.labels_copied} label files, "
          f"{len(report.failures)} failures")
    return 1 if report.failures else 0


def cmd_build_crops(opts: dict) -> int:
    root = Path(opts["dataset"])
    timer = StageTimer()
    try:
        index = index_dataset(root)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc
    out_root = Path(opts["out"])
    sampling = NegativeSampling(
        ratio=opts.get("ratio", 1.0),
        max_iou=opts.get("neg_max_iou", 0.1),
        seed=opts.get("seed") or 0,
    )
    report = build_crops(index, _edge_config(opts), out_root / "fire", out_root / "nofire", sampling)
    timer.mark("build")
    report_path = out_root / "crops_report.json"
    write_report(report_path, report.to_obj())
    write_manifest(out_root / "manifest.json", "build-crops", _manifest_args(opts),
                   [str(root)], [str(report_path)], timer.timing)
    print(format_stats_table([], [{"split": index.split, "fire": report.fire, "no_fire": report.no_fire}]), end="")
    return 0


def cmd_tiles(opts: dict) -> int:
    patch_w, patch_h = _parse_patch(opts.get("patch") or "640")
    overlap_x, overlap_y = _parse_overlap(opts.get("overlap") or "0.2")
    try:
        plan = plan_tiles(opts["width"], opts["height"], patch_w, patch_h, overlap_x, overlap_y)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    print(plan.to_json())
    if opts.get("out"):
        out_dir = Path(opts["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "tiles.json").write_text(plan.to_json() + "\n", encoding="utf-8")
        write_manifest(out_dir / "manifest.json", "tiles", _manifest_args(opts),
                       [], [str(out_dir / "tiles.json")], {})
    return 0


def cmd_stats(opts: dict) -> int:
    root = Path(opts["dataset"])
    if not root.is_dir():
        raise InputError(f"dataset root not found: {root}")
    detect_rows = []
    if (root / "images").is_dir():
        detect_rows.append(dataset_stats(index_dataset(root)))
    else:
        for sub in sorted(p for p in root.iterdir() if (p / "images").is_dir()):
            detect_rows.append(dataset_stats(index_dataset(sub)))
    classify_rows = []
    if (root / "fire").is_dir() and (root / "nofire").is_dir():
        classify_rows.append({
            "split": root.name,
            "fire": sum(1 for _ in (root / "fire").glob("*.png")),
            "no_fire": sum(1 for _ in (root / "nofire").glob("*.png")),
        })
    if not detect_rows and not classify_rows:
        raise InputError(f"{root}: neither images/ nor fire//nofire/ found")
    table = format_stats_table(detect_rows, classify_rows)
    print(table, end="")
    if opts.get("out"):
        out_dir = Path(opts["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        stats_path = out_dir / "stats.json"
        write_report(stats_path, {"detect": detect_rows, "classify": classify_rows})
        (out_dir / "stats.txt").write_text(table, encoding="utf-8")
        write_manifest(out_dir / "manifest.json", "stats", _manifest_args(opts),
                       [str(root)], [str(stats_path)], {})
    return 0


def cmd_rerun(opts: dict) -> int:
    manifest = load_manifest(opts["manifest"])
    command = manifest["command"]
    if command not in COMMANDS:
        raise InputError(f"manifest names unknown command {command!r}")
    return COMMANDS[command](manifest["args"])


COMMANDS = {
    "edges": cmd_edges,
    "detect": cmd_detect,
    "evaluate": cmd_evaluate,
    "convert-gray": cmd_convert_gray,
    "build-crops": cmd_build_crops,
    "tiles": cmd_tiles,
    "stats": cmd_stats,
}


def _manifest_args(opts: dict) -> dict:
    return {k: v for k, v in opts.items() if k != "func" and not callable(v)}


def _add_edge_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--edge-config", help="EdgeConfig key=value file")
    p.add_argument("--sigma", type=float)
    p.add_argument("--ksize", type=int)
    p.add_argument("--canny-low", type=float)
    p.add_argument("--canny-high", type=float)
    p.add_argument("--weight-laplacian", type=float)
    p.add_argument("--weight-canny", type=float)
    p.add_argument("--operator", choices=("laplacian", "sobel"))
    p.add_argument("--order", choices=("parallel", "sequential"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pyrolens", description=__doc__)
    parser.add_argument("--version", action="version", version=f"pyrolens {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("edges", help="edge-enhance one image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--save-config", help="also write the resolved EdgeConfig here")
    _add_edge_flags(p)
    p.set_defaults(func=cmd_edges)

    p = sub.add_parser("detect", help="run the two-stage cascade over a frame source")
    p.add_argument("frames", help="image directory or list file")
    p.add_argument("--out", required=True, help="output directory (results.jsonl, manifest.json)")
    p.add_argument("--backend-cmd", help=f"detector command line (or ${BACKEND_CMD_ENV})")
    p.add_argument("--classifier-cmd", help="classifier command line")
    p.add_argument("--mock-script", help="mock backend script JSON (used when no command given)")
    p.add_argument("--seed", type=int, default=0, help="mock backend jitter seed")
    p.add_argument("--timeout", type=float, default=10.0, help="backend response timeout (s)")
    p.add_argument("--tau-detect", type=float, default=0.6)
    p.add_argument("--tau-classify", type=float, default=0.6)
    p.add_argument("--nms-iou", type=float, default=0.5)
    p.add_argument("--patched", action="store_true", help="tile stage one")
    p.add_argument("--patch", default="640", help="patch size, SIZE or WxH")
    p.add_argument("--overlap", default="0.2", help="tile overlap fraction, X or X,Y")
    p.add_argument("--keep-no-fire", action="store_true")
    p.add_argument("--predictions", help="also write per-image detection JSON files here")
    p.add_argument("--annotate", help="write annotated PNG frames into this directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--fail-fast", action="store_true")
    _add_edge_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score predictions against YOLO ground truth")
    p.add_argument("predictions", help="directory of per-image detection JSON files")
    p.add_argument("ground_truth", help="dataset root with images/ and labels/")
    p.add_argument("--out", required=True)
    p.add_argument("--method", help="row label for the report table")
    p.add_argument("--coco-interp", action="store_true", help="101-point interpolated AP (non-default)")
    p.add_argument("--pr-csv", action="store_true", help="dump PR sweep CSV per category at IoU 0.5")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("convert-gray", help="convert a dataset's images to grayscale")
    p.add_argument("src")
    p.add_argument("dst")
    p.set_defaults(func=cmd_convert_gray)

    p = sub.add_parser("build-crops", help="build the fire/no-fire classification crops")
    p.add_argument("dataset", help="dataset root with images/ and labels/")
    p.add_argument("--out", required=True)
    p.add_argument("--ratio", type=float, default=1.0, help="negatives per positive")
    p.add_argument("--neg-max-iou", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    _add_edge_flags(p)
    p.set_defaults(func=cmd_build_crops)

    p = sub.add_parser("tiles", help="print a tile plan as JSON")
    p.add_argument("width", type=int)
    p.add_argument("height", type=int)
    p.add_argument("--patch", default="640")
    p.add_argument("--overlap", default="0.2")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tiles)

    p = sub.add_parser("stats", help="dataset statistics table")
    p.add_argument("dataset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("rerun", help="replay a run from its manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    opts = vars(args)
    func = opts.pop("func")
    opts.pop("command", None)
    try:
        return func(opts)
    except (InputError, FileNotFoundError, LabelError, EvalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # processing failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
