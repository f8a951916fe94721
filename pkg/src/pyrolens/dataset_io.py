"""YOLO-format label parsing, dataset indexing, grayscale conversion, and
classification-crop building.

Dataset layout: sibling ``images/`` and ``labels/`` directories with
matching basenames; labels are one ``category cx cy w h`` record per line,
center-based and normalized to [0, 1].
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

from .boxes import Box, iou
from .image_io import read_image, write_image
from .imaging import EdgeConfig, edge_enhance, rgb_to_gray

IMAGE_SUFFIXES = (".png", ".pgm")


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class LabelRecord:
    category: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.category < 0:
            raise ValueError(f"category must be >= 0, got {self.category}")
        for name in ("cx", "cy", "w", "h"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"w and h must be positive, got w={self.w}, h={self.h}")


def parse_labels(text: str) -> list[LabelRecord]:
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise LabelError(f"line {lineno}: expected 5 fields, got {len(parts)}: {raw!r}")
        try:
            records.append(LabelRecord(int(parts[0]), *(float(p) for p in parts[1:])))
        except ValueError as exc:
            raise LabelError(f"line {lineno}: {exc}") from exc
    return records


def serialize_labels(records: list[LabelRecord]) -> str:
    """Canonical text form: space-separated, newline-terminated, '.' decimals."""
    return "".join(f"{r.category} {r.cx} {r.cy} {r.w} {r.h}\n" for r in records)


def denormalize(rec: LabelRecord, img_w: int, img_h: int) -> Optional[tuple[int, Box]]:
    """Pixel box for a normalized record, clipped to the image.

    Returns None when rounding degenerates the box to zero extent.
    """
    if img_w < 1 or img_h < 1:
        raise ValueError("image dimensions must be positive")
    x = round(rec.cx * img_w - rec.w * img_w / 2)
    y = round(rec.cy * img_h - rec.h * img_h / 2)
    w = round(rec.w * img_w)
    h = round(rec.h * img_h)
    x0, y0 = max(x, 0), max(y, 0)
    w, h = min(x + w, img_w) - x0, min(y + h, img_h) - y0
    if w <= 0 or h <= 0:
        return None
    return rec.category, Box(x0, y0, w, h)


def normalize(category: int, box: Box, img_w: int, img_h: int) -> LabelRecord:
    return LabelRecord(
        category,
        (box.x + box.w / 2) / img_w,
        (box.y + box.h / 2) / img_h,
        box.w / img_w,
        box.h / img_h,
    )


@dataclass
class DatasetIndex:
    split: str
    pairs: list[tuple[Path, Optional[Path]]]
    images: int
    boxes: int


def index_dataset(root: str | Path, split: str = "") -> DatasetIndex:
    """Scan an images/ + labels/ pair into an index with verified counts."""
    root = Path(root)
    images_dir = root / "images"
    labels_dir = root / "labels"
    if not images_dir.is_dir():
        raise FileNotFoundError(f"{root}: no images/ directory")
    pairs: list[tuple[Path, Optional[Path]]] = []
    boxes = 0
    for image_path in sorted(images_dir.iterdir()):
        if image_path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        label_path = labels_dir / (image_path.stem + ".txt")
        if label_path.is_file():
            boxes += len(parse_labels(label_path.read_text(encoding="utf-8")))
            pairs.append((image_path, label_path))
        else:
            pairs.append((image_path, None))
    return DatasetIndex(split=split or root.name, pairs=pairs, images=len(pairs), boxes=boxes)


def load_ground_truth(index: DatasetIndex) -> dict[str, list[tuple[int, Box]]]:
    """Denormalized ground truth keyed by image stem (degenerate boxes skipped)."""
    gts: dict[str, list[tuple[int, Box]]] = {}
    for image_path, label_path in index.pairs:
        img = read_image(image_path)
        h, w = img.shape[:2]
        boxes = []
        if label_path is not None:
            for i, rec in enumerate(parse_labels(label_path.read_text(encoding="utf-8"))):
                denorm = denormalize(rec, w, h)
                if denorm is None:
                    log.warning("%s record %d degenerates to zero extent, skipped", label_path, i)
                    continue
                boxes.append(denorm)
        gts[image_path.stem] = boxes
    return gts


@dataclass
class ConversionReport:
    converted: int = 0
    labels_copied: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)

    def to_obj(self) -> dict:
        return {
            "converted": self.converted,
            "labels_copied": self.labels_copied,
            "failures": [{"path": p, "error": e} for p, e in self.failures],
        }


def convert_dataset_gray(src: str | Path, dst: str | Path) -> ConversionReport:
    """Convert every image to grayscale; copy labels verbatim.

    Unreadable images are recorded and skipped, never fatal.
    """
    src, dst = Path(src), Path(dst)
    src_images = src / "images" if (src / "images").is_dir() else src
    dst_images = dst / "images" if src_images != src else dst
    dst_images.mkdir(parents=True, exist_ok=True)
    report = ConversionReport()
    for image_path in sorted(src_images.iterdir()):
        if image_path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        try:
            img = read_image(image_path)
            gray = rgb_to_gray(img) if img.ndim == 3 else img
            write_image(dst_images / image_path.name, gray)
            report.converted += 1
        except Exception as exc:
            report.failures.append((str(image_path), str(exc)))
    src_labels = src / "labels"
    if src_labels.is_dir():
        dst_labels = dst / "labels"
        dst_labels.mkdir(parents=True, exist_ok=True)
        for label_path in sorted(src_labels.glob("*.txt")):
            (dst_labels / label_path.name).write_bytes(label_path.read_bytes())
            report.labels_copied += 1
    return report


@dataclass(frozen=True)
class NegativeSampling:
    ratio: float = 1.0
    max_iou: float = 0.1
    attempts: int = 50
    seed: int = 0


@dataclass
class CropReport:
    fire: int = 0
    no_fire: int = 0
    skipped_small: int = 0
    unplaceable: int = 0
    negatives: list[dict] = field(default_factory=list)  # audit trail of sampled boxes

    def to_obj(self) -> dict:
        return {
            "fire": self.fire,
            "no_fire": self.no_fire,
            "skipped_small": self.skipped_small,
            "unplaceable": self.unplaceable,
            "negatives": self.negatives,
        }


def build_crops(
    index: DatasetIndex,
    edge_cfg: EdgeConfig,
    fire_dir: str | Path,
    nofire_dir: str | Path,
    sampling: NegativeSampling = NegativeSampling(),
) -> CropReport:
    """Build the fire/no-fire classification crop dataset.

    Every ground-truth box becomes an edge-enhanced crop under ``fire_dir``.
    Negatives are random boxes whose IoU with every ground truth of their
    image stays below ``sampling.max_iou``, with sizes drawn from the
    positive boxes, written under ``nofire_dir``.
    """
    fire_dir, nofire_dir = Path(fire_dir), Path(nofire_dir)
    fire_dir.mkdir(parents=True, exist_ok=True)
    nofire_dir.mkdir(parents=True, exist_ok=True)
    report = CropReport()
    rng = random.Random(sampling.seed)

    grays: dict[str, np.ndarray] = {}
    per_image_gts: dict[str, list[Box]] = {}
    size_pool: list[tuple[int, int]] = []
    for image_path, label_path in index.pairs:
        img = read_image(image_path)
        gray = rgb_to_gray(img) if img.ndim == 3 else img
        grays[image_path.stem] = gray
        h, w = gray.shape
        boxes: list[Box] = []
        records = parse_labels(label_path.read_text(encoding="utf-8")) if label_path else []
        for i, rec in enumerate(records):
            denorm = denormalize(rec, w, h)
            if denorm is None:
                log.warning("%s record %d degenerates to zero extent, skipped", label_path, i)
                continue
            _, box = denorm
            boxes.append(box)
            if box.w < 2 or box.h < 2:
                report.skipped_small += 1
                continue
            patch = gray[int(box.y) : int(box.y2), int(box.x) : int(box.x2)]
            write_image(fire_dir / f"{image_path.stem}_{i:03d}.png", edge_enhance(patch, edge_cfg))
            report.fire += 1
            size_pool.append((int(box.w), int(box.h)))
        per_image_gts[image_path.stem] = boxes

    wanted = round(sampling.ratio * report.fire)
    stems = sorted(grays)
    for n in range(wanted):
        placed = False
        for _ in range(sampling.attempts):
            stem = stems[rng.randrange(len(stems))]
            gray = grays[stem]
            h, w = gray.shape
            bw, bh = size_pool[rng.randrange(len(size_pool))] if size_pool else (0, 0)
            bw, bh = min(bw, w), min(bh, h)
            if bw < 2 or bh < 2:
                continue
            x = rng.randrange(w - bw + 1)
            y = rng.randrange(h - bh + 1)
            candidate = Box(x, y, bw, bh)
            if any(iou(candidate, gt) >= sampling.max_iou for gt in per_image_gts[stem]):
                continue
            patch = gray[y : y + bh, x : x + bw]
            write_image(nofire_dir / f"{stem}_neg{n:04d}.png", edge_enhance(patch, edge_cfg))
            report.no_fire += 1
            report.negatives.append({"image": stem, "bbox": [x, y, bw, bh]})
            placed = True
            break
        if not placed:
            report.unplaceable += 1
    return report


def dataset_stats(index: DatasetIndex) -> dict:
    return {"split": index.split, "images": index.images, "boxes": index.boxes}


def format_stats_table(
    detect_rows: list[dict], classify_rows: Optional[list[dict]] = None
) -> str:
    """Aligned text in the two-section dataset-statistics layout."""
    out = []
    if detect_rows:
        out.append("Dataset detect")
        widths = [max(len(str(r["split"])) for r in detect_rows + [{"split": "Split"}]), 8, 8]
        out.append(f"  {'Split':<{widths[0]}}  {'Images':>8}  {'Bbox':>8}")
        for r in detect_rows:
            out.append(f"  {r['split']:<{widths[0]}}  {r['images']:>8}  {r['boxes']:>8}")
    if classify_rows:
        if out:
            out.append("")
        out.append("Dataset classify")
        w0 = max(len(str(r["split"])) for r in classify_rows + [{"split": "Split"}])
        out.append(f"  {'Split':<{w0}}  {'Fire':>8}  {'No Fire':>8}")
        for r in classify_rows:
            out.append(f"  {r['split']:<{w0}}  {r['fire']:>8}  {r['no_fire']:>8}")
    return "\n".join(out) + "\n"


def write_report(path: str | Path, obj: dict) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")
