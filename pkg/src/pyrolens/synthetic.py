"""Synthetic nighttime frames with bright blobs, plus mock scripts derived
from their labels.

The generator places non-overlapping bright elliptical blobs on a dark
noisy background and writes a standard images/ + labels/ dataset.  A mock
script built from those labels acts as an oracle detector: full frames map
to their boxes, tile crops map to the boxes fully contained in the tile
(translated into crop coordinates), so a tiled run reconstructs exactly
the ground truth.
"""

from __future__ import annotations

import random
from pathlib import Path

import numpy as np

from .backends import MockScript, fingerprint
from .boxes import Box, Detection
from .dataset_io import DatasetIndex, denormalize, index_dataset, normalize, parse_labels, serialize_labels
from .image_io import read_image, write_image
from .tiling import TilePlan, crop


def blob_layout(
    rng: random.Random, img_w: int, img_h: int, count: int, min_size: int, max_size: int
) -> list[Box]:
    """Non-overlapping boxes placed on a coarse grid of slots."""
    cell = max_size + 8
    cols, rows = img_w // cell, img_h // cell
    if count > cols * rows:
        raise ValueError(f"cannot place {count} blobs on a {cols}x{rows} slot grid")
    slots = rng.sample([(c, r) for r in range(rows) for c in range(cols)], count)
    boxes = []
    for c, r in slots:
        w = rng.randint(min_size, max_size)
        h = rng.randint(min_size, max_size)
        x = c * cell + rng.randint(0, cell - w - 1)
        y = r * cell + rng.randint(0, cell - h - 1)
        boxes.append(Box(x, y, w, h))
    return boxes


def render_frame(img_w: int, img_h: int, boxes: list[Box], seed: int) -> np.ndarray:
    """Dark noisy frame with a bright elliptical blob per box."""
    rng = np.random.default_rng(seed)
    frame = rng.integers(0, 24, size=(img_h, img_w), dtype=np.uint8)
    for box in boxes:
        x0, y0, w, h = int(box.x), int(box.y), int(box.w), int(box.h)
        ys, xs = np.mgrid[0:h, 0:w]
        nx = (xs - (w - 1) / 2) / (w / 2)
        ny = (ys - (h - 1) / 2) / (h / 2)
        rr = nx * nx + ny * ny
        blob = np.where(rr <= 1.0, 255 - 75 * rr, 0.0)
        region = frame[y0 : y0 + h, x0 : x0 + w]
        frame[y0 : y0 + h, x0 : x0 + w] = np.maximum(region, blob.astype(np.uint8))
    return frame


def make_dataset(
    root: str | Path,
    frames: int = 50,
    img_w: int = 640,
    img_h: int = 480,
    blobs_per_frame: int = 5,
    min_size: int = 20,
    max_size: int = 56,
    seed: int = 7,
) -> DatasetIndex:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    for i in range(frames):
        boxes = blob_layout(rng, img_w, img_h, blobs_per_frame, min_size, max_size)
        frame = render_frame(img_w, img_h, boxes, seed=seed * 100_003 + i)
        stem = f"frame_{i:04d}"
        write_image(root / "images" / f"{stem}.png", frame)
        records = [normalize(0, b, img_w, img_h) for b in boxes]
        (root / "labels" / f"{stem}.txt").write_text(serialize_labels(records), encoding="utf-8")
    return index_dataset(root)


def _contained(box: Box, x0: int, y0: int, w: int, h: int) -> bool:
    return box.x >= x0 and box.y >= y0 and box.x2 <= x0 + w and box.y2 <= y0 + h


def script_from_index(
    index: DatasetIndex,
    plan: TilePlan | None = None,
    score: float = 0.95,
    drop_fraction: float = 0.0,
    drop_seed: int = 0,
) -> MockScript:
    """Oracle detector script for a labeled dataset.

    ``drop_fraction`` removes that share of ground-truth boxes globally
    (deterministically), simulating a detector with imperfect recall; a
    dropped box disappears from every tile that contains it.
    """
    per_image: list[tuple[Path, list[Box]]] = []
    all_ids: list[tuple[int, int]] = []
    for idx, (image_path, label_path) in enumerate(index.pairs):
        img = read_image(image_path)
        h, w = img.shape[:2]
        boxes = []
        if label_path is not None:
            for rec in parse_labels(label_path.read_text(encoding="utf-8")):
                denorm = denormalize(rec, w, h)
                if denorm is not None:
                    boxes.append(denorm[1])
        per_image.append((image_path, boxes))
        all_ids.extend((idx, j) for j in range(len(boxes)))

    dropped: set[tuple[int, int]] = set()
    if drop_fraction > 0:
        k = round(drop_fraction * len(all_ids))
        dropped = set(random.Random(drop_seed).sample(all_ids, k))

    script = MockScript()
    for idx, (image_path, boxes) in enumerate(per_image):
        kept = [b for j, b in enumerate(boxes) if (idx, j) not in dropped]
        img = read_image(image_path)
        if plan is None:
            script.detect_by_fingerprint[fingerprint(img)] = [
                Detection(b, 0, score) for b in kept
            ]
            continue
        for tile in plan.tiles:
            inside = [
                Detection(Box(b.x - tile.x0, b.y - tile.y0, b.w, b.h), 0, score)
                for b in kept
                if _contained(b, tile.x0, tile.y0, tile.w, tile.h)
            ]
            key = fingerprint(crop(img, tile))
            if inside or key not in script.detect_by_fingerprint:
                script.detect_by_fingerprint[key] = inside
    return script
