"""Overlapped fixed-size patch planning, cropping, and patched detection.

A plan covers every pixel of the image: per axis the stride is
``round(patch * (1 - overlap))`` and the final tile is clamped flush with
the image border, so no padding is ever needed.  Any box no larger than
``patch * overlap`` per axis is guaranteed to lie fully inside at least
one tile, which is what recovers objects split across patch boundaries.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .boxes import Detection, clip_to, nms, translate


@dataclass(frozen=True)
class Tile:
    x0: int
    y0: int
    w: int
    h: int


@dataclass(frozen=True)
class TilePlan:
    image_width: int
    image_height: int
    tiles: tuple[Tile, ...]
    overlap_x: float
    overlap_y: float

    def to_obj(self) -> dict:
        return {
            "image": [self.image_width, self.image_height],
            "patch": [self.tiles[0].w, self.tiles[0].h] if self.tiles else [0, 0],
            "overlap": [self.overlap_x, self.overlap_y],
            "tiles": [[t.x0, t.y0, t.w, t.h] for t in self.tiles],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True)


class TileDetectError(RuntimeError):
    """Backend failure during patched detection, annotated with the tile."""

    def __init__(self, tile: Tile, cause: BaseException):
        super().__init__(f"detector failed on tile ({tile.x0},{tile.y0},{tile.w},{tile.h}): {cause}")
        self.tile = tile


def _axis_offsets(extent: int, patch: int, overlap: float) -> tuple[int, list[int]]:
    p = min(patch, extent)
    stride = max(1, round(p * (1.0 - overlap)))
    offsets = []
    o = 0
    while o + p < extent:
        offsets.append(o)
        o += stride
    final = extent - p
    if not offsets or offsets[-1] != final:
        offsets.append(final)
    return p, offsets


def plan_tiles(
    img_w: int,
    img_h: int,
    patch_w: int = 640,
    patch_h: int = 640,
    overlap_x: float = 0.2,
    overlap_y: float = 0.2,
) -> TilePlan:
    """Row-major plan of overlapped patches covering the whole image."""
    if img_w < 1 or img_h < 1 or patch_w < 1 or patch_h < 1:
        raise ValueError("image and patch dimensions must be >= 1")
    if not (0 <= overlap_x < 1 and 0 <= overlap_y < 1):
        raise ValueError(f"overlap fractions must lie in [0, 1), got {overlap_x}, {overlap_y}")
    px, xs = _axis_offsets(img_w, patch_w, overlap_x)
    py, ys = _axis_offsets(img_h, patch_h, overlap_y)
    tiles = tuple(Tile(x, y, px, py) for y in ys for x in xs)
    return TilePlan(img_w, img_h, tiles, overlap_x, overlap_y)


def crop(img: np.ndarray, tile: Tile) -> np.ndarray:
    """Exact pixel copy of the tile region."""
    h, w = img.shape[:2]
    if tile.x0 < 0 or tile.y0 < 0 or tile.x0 + tile.w > w or tile.y0 + tile.h > h:
        raise ValueError(f"tile {tile} exceeds image bounds {w}x{h}")
    return img[tile.y0 : tile.y0 + tile.h, tile.x0 : tile.x0 + tile.w].copy()


def _detect_capacity(detector) -> int:
    info = getattr(detector, "info", None)
    return max(1, getattr(info, "capacity", 1)) if info is not None else 1


def patched_detect(
    img: np.ndarray,
    detector,
    plan: TilePlan,
    nms_iou: float = 0.5,
    class_aware: bool = True,
    jobs: int = 1,
) -> list[Detection]:
    """Detect on every tile, remap to global coordinates, and NMS-merge.

    Tiles may be dispatched concurrently (bounded by ``jobs`` and the
    backend's advertised capacity); results are merged in plan order so
    the output never depends on scheduling.
    """
    h, w = img.shape[:2]
    if (w, h) != (plan.image_width, plan.image_height):
        raise ValueError(
            f"plan is for {plan.image_width}x{plan.image_height}, image is {w}x{h}"
        )

    def run_tile(tile: Tile) -> list[Detection]:
        try:
            found = detector.detect(crop(img, tile))
        except Exception as exc:
            raise TileDetectError(tile, exc) from exc
        remapped = (translate(d, tile.x0, tile.y0) for d in found)
        return [c for c in (clip_to(d, w, h) for d in remapped) if c is not None]

    workers = min(max(1, jobs), _detect_capacity(detector), max(1, len(plan.tiles)))
    if workers == 1:
        per_tile = [run_tile(t) for t in plan.tiles]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_tile = list(pool.map(run_tile, plan.tiles))
    merged = [d for tile_dets in per_tile for d in tile_dets]
    return nms(merged, nms_iou, class_aware=class_aware)
