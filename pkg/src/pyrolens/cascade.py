"""Confidence-gated two-stage detection.

Stage one runs the detector (optionally tiled).  Detections confident
beyond ``tau_detect`` pass straight through; the rest are cropped from the
grayscale frame, edge-enhanced, and re-judged by the classifier, which
either rescues them (score >= ``tau_classify``, with its own category and
score) or discards them.  Both gates are exact: stage one uses strict
``>``, the classifier discards on strict ``<``.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Union

import numpy as np

from .backends import NO_FIRE, Classifier, Detector
from .boxes import Detection, Source, clip_to, detection_to_obj, nms
from .imaging import EdgeConfig, edge_enhance, rgb_to_gray
from .tiling import patched_detect, plan_tiles


@dataclass(frozen=True)
class CascadeConfig:
    tau_detect: float = 0.6
    tau_classify: float = 0.6
    use_patching: bool = False
    patch_w: int = 640
    patch_h: int = 640
    overlap_x: float = 0.2
    overlap_y: float = 0.2
    nms_iou: float = 0.5
    edge: EdgeConfig = field(default_factory=EdgeConfig)
    keep_no_fire: bool = False
    min_crop: int = 2

    def __post_init__(self):
        if not 0.0 <= self.tau_detect <= 1.0:
            raise ValueError(f"tau_detect must lie in [0, 1], got {self.tau_detect}")
        if not 0.0 <= self.tau_classify <= 1.0:
            raise ValueError(f"tau_classify must lie in [0, 1], got {self.tau_classify}")


@dataclass
class FrameResult:
    detections: list[Detection]
    direct: int
    cascade: int
    discarded: int

    @property
    def counters(self) -> dict:
        return {"direct": self.direct, "cascade": self.cascade, "discarded": self.discarded}


@dataclass
class FrameError:
    frame: Union[int, str]
    message: str


class CascadeAborted(RuntimeError):
    """Raised in fail-fast mode when a frame cannot be processed."""

    def __init__(self, frame: Union[int, str], message: str):
        super().__init__(f"frame {frame!r}: {message}")
        self.frame = frame


def _crop_pixels(gray: np.ndarray, det: Detection) -> np.ndarray:
    b = det.box
    x0, y0 = int(math.floor(b.x)), int(math.floor(b.y))
    x1, y1 = int(math.ceil(b.x2)), int(math.ceil(b.y2))
    return gray[y0:y1, x0:x1]


def run_frame(
    img: np.ndarray,
    detector: Detector,
    classifier: Classifier,
    cfg: CascadeConfig = CascadeConfig(),
    jobs: int = 1,
) -> FrameResult:
    """Apply the two-stage logic to one frame."""
    h, w = img.shape[:2]
    gray = img if img.ndim == 2 else rgb_to_gray(img)
    if cfg.use_patching:
        plan = plan_tiles(w, h, cfg.patch_w, cfg.patch_h, cfg.overlap_x, cfg.overlap_y)
        stage_one = patched_detect(img, detector, plan, cfg.nms_iou, jobs=jobs)
    else:
        stage_one = detector.detect(img)

    accepted: list[Detection] = []
    direct = cascade = discarded = 0
    for det in stage_one:
        if det.score > cfg.tau_detect:
            accepted.append(replace(det, source=Source.DIRECT))
            direct += 1
            continue
        clipped = clip_to(det, w, h)
        if clipped is None or clipped.box.w < cfg.min_crop or clipped.box.h < cfg.min_crop:
            discarded += 1
            continue
        enhanced = edge_enhance(_crop_pixels(gray, clipped), cfg.edge)
        category, score = classifier.classify(enhanced)
        if score < cfg.tau_classify or (category == NO_FIRE and not cfg.keep_no_fire):
            discarded += 1
            continue
        accepted.append(Detection(clipped.box, category, score, Source.CASCADE))
        cascade += 1
    return FrameResult(nms(accepted, cfg.nms_iou), direct, cascade, discarded)


FrameItem = tuple[Union[int, str], np.ndarray]
SequenceItem = tuple[Union[int, str], Union[FrameResult, FrameError]]


def run_sequence(
    frames: Iterable[FrameItem],
    detector: Detector,
    classifier: Classifier,
    cfg: CascadeConfig = CascadeConfig(),
    *,
    fail_fast: bool = False,
    jobs: int = 1,
) -> Iterator[SequenceItem]:
    """Process an ordered frame source, one result per frame, in order.

    Frames are independent; a failing frame yields a :class:`FrameError`
    record and processing moves on, unless ``fail_fast`` is set, in which
    case :class:`CascadeAborted` is raised.
    """

    def one(item: FrameItem) -> SequenceItem:
        frame_id, img = item
        try:
            return frame_id, run_frame(img, detector, classifier, cfg)
        except Exception as exc:
            return frame_id, FrameError(frame_id, str(exc))

    def emit(result: SequenceItem) -> SequenceItem:
        if fail_fast and isinstance(result[1], FrameError):
            raise CascadeAborted(result[0], result[1].message)
        return result

    if jobs <= 1:
        for item in frames:
            yield emit(one(item))
        return
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        window: deque = deque()
        for item in frames:
            window.append(pool.submit(one, item))
            if len(window) >= 2 * jobs:
                yield emit(window.popleft().result())
        while window:
            yield emit(window.popleft().result())


def result_to_obj(frame_id: Union[int, str], result: Union[FrameResult, FrameError]) -> dict:
    """One JSON-serializable object per frame, the results-file line format."""
    if isinstance(result, FrameError):
        return {"frame": frame_id, "error": result.message}
    return {
        "frame": frame_id,
        "detections": [detection_to_obj(d) for d in result.detections],
        "counters": result.counters,
    }
