"""TorchScript model adapters.

Adapter contracts (what a served model must return):

* detector module: called with a float32 tensor ``[1, C, H, W]`` scaled to
  [0, 1]; returns ``(boxes, scores, labels)`` where ``boxes`` is ``[N, 4]``
  x1,y1,x2,y2 in input-tensor pixels, ``scores`` is ``[N]`` in [0, 1], and
  ``labels`` is ``[N]`` integer categories.
* classifier module: same input; returns logits ``[1, K]``; the bridge
  reports ``(argmax, softmax max)``.

The input-size policy belongs here: ``resize_to=(w, h)`` bilinearly
resizes crops to the model's fixed input and maps detector boxes back to
native pixels; ``None`` feeds crops at native resolution.

torch is imported lazily so stub mode never needs it.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np


class ModelLoadError(RuntimeError):
    pass


def _torch():
    try:
        import torch
    except ImportError as exc:  # pragma: no cover - torch is an install extra
        raise ModelLoadError(f"torch is required for model mode: {exc}") from exc
    return torch


def load_torchscript(path: str | Path, device: str):
    torch = _torch()
    path = Path(path)
    if not path.is_file():
        raise ModelLoadError(f"model file not found: {path}")
    try:
        module = torch.jit.load(str(path), map_location=device)
    except Exception as exc:
        raise ModelLoadError(f"cannot load TorchScript model {path}: {exc}") from exc
    module.eval()
    return module


def _to_tensor(img: np.ndarray, device: str, resize_to: Optional[tuple[int, int]]):
    """uint8 (h,w[,3]) -> float [1,C,H,W] in [0,1], plus the native->model scale."""
    torch = _torch()
    if img.ndim == 2:
        chw = img[None, :, :]
    else:
        chw = np.moveaxis(img, -1, 0)
    tensor = torch.from_numpy(np.ascontiguousarray(chw)).to(device).float().div(255.0).unsqueeze(0)
    scale = (1.0, 1.0)
    if resize_to is not None:
        model_w, model_h = resize_to
        native_h, native_w = img.shape[:2]
        tensor = torch.nn.functional.interpolate(
            tensor, size=(model_h, model_w), mode="bilinear", align_corners=False
        )
        scale = (native_w / model_w, native_h / model_h)
    return tensor, scale


class TorchDetector:
    def __init__(self, path: str | Path, device: str = "cpu",
                 resize_to: Optional[tuple[int, int]] = None):
        self.module = load_torchscript(path, device)
        self.device = device
        self.resize_to = resize_to

    def detect(self, img: np.ndarray) -> dict:
        torch = _torch()
        tensor, (sx, sy) = _to_tensor(img, self.device, self.resize_to)
        with torch.no_grad():
            boxes, scores, labels = self.module(tensor)
        out = []
        for (x1, y1, x2, y2), score, label in zip(
            boxes.cpu().tolist(), scores.cpu().tolist(), labels.cpu().tolist()
        ):
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"model produced score {score} outside [0, 1]")
            x1, x2 = x1 * sx, x2 * sx
            y1, y2 = y1 * sy, y2 * sy
            if x2 <= x1 or y2 <= y1:
                continue
            out.append(
                {"category": int(label), "score": float(score), "bbox": [x1, y1, x2 - x1, y2 - y1]}
            )
        return {"detections": out}

    def classify(self, img: np.ndarray) -> dict:  # pragma: no cover - op gating forbids this
        raise ValueError("detector model cannot classify")


class TorchClassifier:
    def __init__(self, path: str | Path, device: str = "cpu",
                 resize_to: Optional[tuple[int, int]] = None):
        self.module = load_torchscript(path, device)
        self.device = device
        self.resize_to = resize_to

    def classify(self, img: np.ndarray) -> dict:
        torch = _torch()
        tensor, _ = _to_tensor(img, self.device, self.resize_to)
        with torch.no_grad():
            logits = self.module(tensor)
        probs = torch.softmax(logits.reshape(-1), dim=0)
        category = int(torch.argmax(probs).item())
        return {"category": category, "score": float(probs[category].item())}
