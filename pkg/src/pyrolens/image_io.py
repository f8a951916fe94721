"""Image file I/O: binary PGM (P5, maxval 255) and 8-bit PNG.

PGM is read and written by hand so grayscale round-trips are bit-exact;
PNG goes through Pillow and is lossless for 8-bit gray/RGB.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import as_gray


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    img = as_gray(img)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def _read_pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Parse `count` whitespace/comment-separated ASCII integers, return them and the offset past the final separator."""
    tokens: list[int] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ValueError("truncated PGM header")
        c = data[i : i + 1]
        if c == b"#":
            i = data.index(b"\n", i) + 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            tokens.append(int(data[i:j]))
            i = j
    return tokens, i + 1  # single whitespace byte separates header from raster


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    (w, h, maxval), offset = _read_pgm_tokens(data[2:], 3)
    offset += 2
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    raster = data[offset : offset + w * h]
    if len(raster) != w * h:
        raise ValueError(f"{path}: expected {w * h} raster bytes, got {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def read_image(path: str | Path) -> np.ndarray:
    """Load a PGM or PNG as (h, w) or (h, w, 3) uint8."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    with Image.open(path) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8)
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_image(path: str | Path, img: np.ndarray) -> None:
    """Write a PGM (gray only) or PNG (gray or RGB) by file extension."""
    path = Path(path)
    img = np.asarray(img)
    if path.suffix.lower() == ".pgm":
        write_pgm(path, img)
        return
    if img.ndim == 2:
        Image.fromarray(img, mode="L").save(path, format="PNG")
    elif img.ndim == 3 and img.shape[2] == 3:
        Image.fromarray(img, mode="RGB").save(path, format="PNG")
    else:
        raise ValueError(f"cannot write image of shape {img.shape}")
