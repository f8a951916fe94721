"""Toolkit for nighttime fire detection pipelines.

Edge-enhancement preprocessing, overlap-tiled patch inference with NMS
fusion, a confidence-gated two-stage detect/classify cascade, YOLO-format
dataset tooling, and a detection-metrics engine.  Neural models are
pluggable backends behind a line-delimited JSON wire protocol; the toolkit
itself contains no learned weights.
"""

__version__ = "0.1.0"

from .boxes import Box, Detection, Source, iou, nms
from .imaging import EdgeConfig, edge_enhance
from .tiling import Tile, TilePlan, plan_tiles, patched_detect
from .cascade import CascadeConfig, FrameResult, run_frame, run_sequence

__all__ = [
    "Box",
    "CascadeConfig",
    "Detection",
    "EdgeConfig",
    "FrameResult",
    "Source",
    "Tile",
    "TilePlan",
    "edge_enhance",
    "iou",
    "nms",
    "patched_detect",
    "plan_tiles",
    "run_frame",
    "run_sequence",
]
