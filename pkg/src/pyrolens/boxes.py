"""Axis-aligned box geometry, IoU, coordinate transforms, and NMS.

Boxes use a half-open pixel-area convention: ``(x, y, w, h)`` covers
``[x, x+w) x [y, y+h)``, so areas are ``w * h`` with no +1 correction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional


class Source(Enum):
    DIRECT = "direct"
    CASCADE = "cascade"


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box needs positive extent, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Detection:
    box: Box
    category: int
    score: float
    source: Source = Source.DIRECT

    def __post_init__(self):
        if self.category < 0:
            raise ValueError(f"category must be >= 0, got {self.category}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


def iou(a: Box, b: Box) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def score_order(d: Detection):
    """Descending-score processing order with total, deterministic tie-breaks
    (category, then geometry), so results never depend on input order."""
    return (-d.score, d.category, d.box.x, d.box.y, d.box.w, d.box.h, d.source.value)


def nms(
    dets: Iterable[Detection], iou_threshold: float = 0.5, class_aware: bool = True
) -> list[Detection]:
    """Greedy non-maximum suppression.

    A detection is kept iff its IoU with every already-kept detection (of
    the same category, when ``class_aware``) stays below the threshold.
    Output is sorted by score descending.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    kept: list[Detection] = []
    for cand in sorted(dets, key=score_order):
        suppressed = any(
            iou(cand.box, k.box) >= iou_threshold
            for k in kept
            if not class_aware or k.category == cand.category
        )
        if not suppressed:
            kept.append(cand)
    return kept


def translate(det: Detection, dx: float, dy: float) -> Detection:
    box = det.box
    return replace(det, box=Box(box.x + dx, box.y + dy, box.w, box.h))


def clip_to(det: Detection, width: float, height: float) -> Optional[Detection]:
    """Intersect with [0, width) x [0, height); None if nothing remains."""
    if width < 1 or height < 1:
        raise ValueError(f"clip region needs width, height >= 1, got {width}x{height}")
    b = det.box
    x1, y1 = max(b.x, 0), max(b.y, 0)
    x2, y2 = min(b.x2, width), min(b.y2, height)
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        return None
    return replace(det, box=Box(x1, y1, x2 - x1, y2 - y1))


def detection_to_obj(det: Detection) -> dict:
    return {
        "category": det.category,
        "score": det.score,
        "bbox": [det.box.x, det.box.y, det.box.w, det.box.h],
    }


def detection_from_obj(obj: dict, source: Source = Source.DIRECT) -> Detection:
    bbox = obj["bbox"]
    if len(bbox) != 4:
        raise ValueError(f"bbox must have 4 entries, got {bbox!r}")
    return Detection(
        box=Box(*bbox), category=int(obj["category"]), score=float(obj["score"]), source=source
    )


def dump_detections(dets: Iterable[Detection]) -> str:
    """One JSON array per image, the on-disk prediction-file format."""
    return json.dumps([detection_to_obj(d) for d in dets], sort_keys=True)


def load_detections(text: str) -> list[Detection]:
    data = json.loads(text)
    if not isinstance(data, list):
        raise ValueError("detection file must hold a JSON array")
    return [detection_from_obj(obj) for obj in data]
