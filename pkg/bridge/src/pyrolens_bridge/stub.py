"""Scripted stub handlers: deterministic responses without any model.

The script file maps image fingerprints to detection lists and
classification entries; payloads are echoed verbatim so the client side
stays responsible for validating them.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .protocol import image_fingerprint


class StubHandlers:
    def __init__(self, script: dict):
        detect = script.get("detect", {})
        classify = script.get("classify", {})
        self.detect_map = detect.get("by_fingerprint", {})
        self.detect_default = detect.get("default", [])
        self.classify_map = classify.get("by_fingerprint", {})
        self.classify_default = classify.get("default", {"category": 0, "score": 0.0})

    def detect(self, img: np.ndarray) -> dict:
        dets = self.detect_map.get(image_fingerprint(img), self.detect_default)
        return {"detections": dets}

    def classify(self, img: np.ndarray) -> dict:
        return dict(self.classify_map.get(image_fingerprint(img), self.classify_default))


def load_script(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
