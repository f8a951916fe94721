"""Wire protocol version 1: framing, canonical encoding, image payloads.

One JSON object per line.  Responses use the canonical encoding (sorted
keys, no whitespace) so conformance transcripts are byte-stable.  Image
payloads are raw row-major 8-bit samples, base64-encoded, never a codec
format; an image's fingerprint is sha256 over ``"{w}x{h}x{c}:"`` plus the
raw samples.
"""

from __future__ import annotations

import base64
import hashlib
import json

import numpy as np

PROTOCOL_VERSION = 1


def canonical(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def decode_image(obj: dict) -> np.ndarray:
    w, h, c = int(obj["w"]), int(obj["h"]), int(obj["c"])
    if c not in (1, 3):
        raise ValueError(f"c must be 1 or 3, got {c}")
    raw = base64.b64decode(obj["data"])
    if len(raw) != w * h * c:
        raise ValueError(f"expected {w * h * c} sample bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8)
    return arr.reshape(h, w) if c == 1 else arr.reshape(h, w, 3)


def image_fingerprint(img: np.ndarray) -> str:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    c = 1 if img.ndim == 2 else img.shape[2]
    h, w = img.shape[:2]
    return hashlib.sha256(f"{w}x{h}x{c}:".encode("ascii") + img.tobytes()).hexdigest()
