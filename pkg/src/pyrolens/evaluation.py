"""Detection metrics: greedy IoU matching, precision/recall/F1, PR curves,
AP, and mAP aggregates.

AP is the exact rectangular sum over the PR sweep,

    AP = sum_k (r(k) - r(k-1)) * p(k),   r(-1) = 0,

with one sweep point per distinct confidence value, no interpolation.
COCO-style 101-point interpolation is available behind ``interpolation=
"coco101"`` for comparability with other tooling, and is not the default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .boxes import Box, Detection, iou, score_order

GtBoxes = Sequence[tuple[int, Box]]
GroundTruth = Mapping[str, GtBoxes]
Predictions = Mapping[str, Sequence[Detection]]

IOU_GRID = tuple(t / 100 for t in range(50, 100, 5))


class EvalError(ValueError):
    pass


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    matches: tuple[Optional[int], ...]  # per input detection: matched GT index or None


def match_detections(dets: Sequence[Detection], gts: GtBoxes, iou_t: float) -> MatchResult:
    """Greedy one-to-one matching in descending score order.

    Each detection claims the unmatched same-category ground truth with
    the highest IoU, provided that IoU reaches ``iou_t``; equal IoUs go to
    the lowest ground-truth index.
    """
    if not 0.0 < iou_t <= 1.0:
        raise ValueError(f"iou_t must lie in (0, 1], got {iou_t}")
    matches: list[Optional[int]] = [None] * len(dets)
    taken = [False] * len(gts)
    for i in sorted(range(len(dets)), key=lambda i: score_order(dets[i])):
        det = dets[i]
        best, best_iou = None, 0.0
        for j, (category, gbox) in enumerate(gts):
            if taken[j] or category != det.category:
                continue
            v = iou(det.box, gbox)
            if v >= iou_t and v > best_iou:
                best, best_iou = j, v
        if best is not None:
            taken[best] = True
            matches[i] = best
    tp = sum(m is not None for m in matches)
    return MatchResult(tp=tp, fp=len(dets) - tp, fn=len(gts) - tp, matches=tuple(matches))


def precision(m: MatchResult) -> float:
    if m.tp + m.fp == 0:
        return 0.0 if m.fn > 0 else 1.0
    return m.tp / (m.tp + m.fp)


def recall(m: MatchResult) -> float:
    if m.tp + m.fn == 0:
        return 0.0 if m.fp > 0 else 1.0
    return m.tp / (m.tp + m.fn)


def f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


@dataclass
class PRCurve:
    """Sweep points (threshold, precision, recall), descending threshold."""

    points: tuple[tuple[float, float, float], ...]

    def best_f1(self) -> float:
        return max((f1(p, r) for _, p, r in self.points), default=0.0)

    def to_csv(self) -> str:
        lines = ["threshold,precision,recall"]
        lines += [f"{k},{p},{r}" for k, p, r in self.points]
        return "\n".join(lines) + "\n"


def _total_gt(gts: GroundTruth, category: int) -> int:
    return sum(sum(1 for c, _ in boxes if c == category) for boxes in gts.values())


def _category_flags(
    preds: Predictions, gts: GroundTruth, category: int, iou_t: float
) -> tuple[list[tuple[float, bool]], int]:
    """Global (score, is_tp) flags in processing order, plus the GT total."""
    total_gt = _total_gt(gts, category)
    scored: list[tuple[float, bool]] = []
    for image_id in sorted(preds):
        dets = [d for d in preds[image_id] if d.category == category]
        result = match_detections(dets, [g for g in gts.get(image_id, ()) if g[0] == category], iou_t)
        for i in sorted(range(len(dets)), key=lambda i: score_order(dets[i])):
            scored.append((dets[i].score, result.matches[i] is not None))
    # Processing order across the dataset: score descending, image id as a
    # deterministic tie-break (matching stays per-image, so only the sweep
    # grouping depends on this).
    scored.sort(key=lambda t: -t[0])
    return scored, total_gt


def pr_curve(preds: Predictions, gts: GroundTruth, category: int, iou_t: float) -> PRCurve:
    """One point per distinct confidence, cumulative TP/FP at score >= k."""
    scored, total_gt = _category_flags(preds, gts, category, iou_t)
    points = []
    tp = seen = 0
    for idx, (score, is_tp) in enumerate(scored):
        tp += is_tp
        seen += 1
        last_of_group = idx + 1 == len(scored) or scored[idx + 1][0] != score
        if last_of_group:
            r = tp / total_gt if total_gt else 0.0
            points.append((score, tp / seen, r))
    return PRCurve(tuple(points))


def average_precision(
    preds: Predictions,
    gts: GroundTruth,
    category: int,
    iou_t: float,
    interpolation: str = "none",
) -> Optional[float]:
    """AP for one category, or None when the category has no ground truth."""
    if _total_gt(gts, category) == 0:
        return None
    curve = pr_curve(preds, gts, category, iou_t)
    if interpolation == "none":
        ap = 0.0
        prev_r = 0.0
        for _, p, r in curve.points:
            ap += (r - prev_r) * p
            prev_r = r
        return ap
    if interpolation == "coco101":
        ap = 0.0
        for grid_r in (i / 100 for i in range(101)):
            ap += max((p for _, p, r in curve.points if r >= grid_r), default=0.0)
        return ap / 101.0
    raise ValueError(f"unknown interpolation {interpolation!r}")


def _gt_categories(gts: GroundTruth) -> list[int]:
    return sorted({c for boxes in gts.values() for c, _ in boxes})


def map_at(
    preds: Predictions, gts: GroundTruth, iou_t: float, interpolation: str = "none"
) -> float:
    """Mean AP over all categories that appear in the ground truth."""
    categories = _gt_categories(gts)
    if not categories:
        raise EvalError("ground truth contains no boxes; mAP is undefined")
    aps = [average_precision(preds, gts, c, iou_t, interpolation) for c in categories]
    return sum(aps) / len(aps)  # type: ignore[arg-type]  # GT categories never yield None


def map_range(
    preds: Predictions,
    gts: GroundTruth,
    thresholds: Sequence[float] = IOU_GRID,
    interpolation: str = "none",
) -> float:
    return sum(map_at(preds, gts, t, interpolation) for t in thresholds) / len(thresholds)


@dataclass
class CategoryMetrics:
    precision: float
    recall: float
    f1: float
    ap: float


@dataclass
class EvalReport:
    per_category: dict[int, dict[float, CategoryMetrics]]
    map50: float
    map50_95: float
    best_f1: float
    images: int
    gt_boxes: int
    detections: int

    def to_obj(self) -> dict:
        return {
            "map50": self.map50,
            "map50_95": self.map50_95,
            "best_f1": self.best_f1,
            "images": self.images,
            "gt_boxes": self.gt_boxes,
            "detections": self.detections,
            "per_category": {
                str(cat): {
                    f"{t:.2f}": {
                        "precision": m.precision,
                        "recall": m.recall,
                        "f1": m.f1,
                        "ap": m.ap,
                    }
                    for t, m in sorted(by_iou.items())
                }
                for cat, by_iou in sorted(self.per_category.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True, indent=2) + "\n"

    def table(self, method: str = "predictions") -> str:
        """Aligned text table with the headline-metric columns."""
        header = ("Method", "mAP@50", "mAP@50:95", "F1-score")
        row = (method, f"{self.map50:.4f}", f"{self.map50_95:.4f}", f"{self.best_f1:.4f}")
        widths = [max(len(a), len(b)) for a, b in zip(header, row)]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        return fmt.format(*header) + "\n" + fmt.format(*row) + "\n"


def evaluate(
    preds: Predictions,
    gts: GroundTruth,
    iou_thresholds: Sequence[float] = IOU_GRID,
    interpolation: str = "none",
) -> EvalReport:
    """Full report over aligned per-image predictions and ground truth.

    Precision/recall/F1 per category and IoU are micro-aggregated over the
    score-free match (every detection counted); the headline best-F1 is
    the max over the IoU-0.50 PR sweep, averaged across categories.
    """
    unknown = sorted(set(preds) - set(gts))
    if unknown:
        raise EvalError(f"predictions reference images absent from ground truth: {', '.join(unknown)}")
    categories = _gt_categories(gts)
    per_category: dict[int, dict[float, CategoryMetrics]] = {}
    for category in categories:
        by_iou: dict[float, CategoryMetrics] = {}
        for iou_t in iou_thresholds:
            tp = fp = fn = 0
            for image_id in sorted(gts):
                dets = [d for d in preds.get(image_id, ()) if d.category == category]
                gt = [g for g in gts[image_id] if g[0] == category]
                m = match_detections(dets, gt, iou_t)
                tp, fp, fn = tp + m.tp, fp + m.fp, fn + m.fn
            m_all = MatchResult(tp, fp, fn, ())
            p, r = precision(m_all), recall(m_all)
            ap = average_precision(preds, gts, category, iou_t, interpolation)
            by_iou[iou_t] = CategoryMetrics(p, r, f1(p, r), 0.0 if ap is None else ap)
        per_category[category] = by_iou

    def mean_ap(iou_t: float) -> float:
        return map_at(preds, gts, iou_t, interpolation) if categories else 0.0

    if categories:
        map50 = mean_ap(0.5)
        map50_95 = sum(mean_ap(t) for t in IOU_GRID) / len(IOU_GRID)
        best = sum(pr_curve(preds, gts, c, 0.5).best_f1() for c in categories) / len(categories)
    else:
        # Vacuously perfect only when there is nothing to find and nothing found.
        empty = all(len(v) == 0 for v in preds.values())
        map50 = map50_95 = best = 1.0 if empty else 0.0
    return EvalReport(
        per_category=per_category,
        map50=map50,
        map50_95=map50_95,
        best_f1=best,
        images=len(gts),
        gt_boxes=sum(len(v) for v in gts.values()),
        detections=sum(len(v) for v in preds.values()),
    )
