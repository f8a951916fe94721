"""Pixel-level operators for the edge-enhancement pipeline.

Images are plain numpy arrays: grayscale ``(h, w) uint8``, RGB
``(h, w, 3) uint8``.  Derivative operators return signed ``(h, w) int32``
maps that hold the raw correlation output exactly, before any
normalization.  All 3x3 kernels are applied as written (correlation, not
flipped) with edge-replicated borders.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy import ndimage

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.int32)
SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.int32)
LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.int32)

OPERATORS = ("laplacian", "sobel")
ORDERS = ("parallel", "sequential")


def as_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8 or img.size == 0:
        raise ValueError(f"expected non-empty (h, w) uint8 image, got {img.dtype} {img.shape}")
    return img


def as_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8 or img.size == 0:
        raise ValueError(f"expected non-empty (h, w, 3) uint8 image, got {img.dtype} {img.shape}")
    return img


def rgb_to_gray(img: np.ndarray) -> np.ndarray:
    """BT.601 luma: round(0.299 R + 0.587 G + 0.114 B), clamped to [0, 255]."""
    img = as_rgb(img)
    f = img.astype(np.float64)
    y = 0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]
    return np.clip(np.rint(y), 0, 255).astype(np.uint8)


def _correlate3(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Exact int32 3x3 correlation with edge-replicated borders."""
    h, w = img.shape
    padded = np.pad(img.astype(np.int32), 1, mode="edge")
    out = np.zeros((h, w), dtype=np.int32)
    for di in range(3):
        for dj in range(3):
            k = int(kernel[di, dj])
            if k:
                out += k * padded[di : di + h, dj : dj + w]
    return out


def sobel(img: np.ndarray, axis: str) -> np.ndarray:
    """First-derivative response along ``"x"`` or ``"y"`` as a signed map."""
    img = as_gray(img)
    if axis == "x":
        return _correlate3(img, SOBEL_X)
    if axis == "y":
        return _correlate3(img, SOBEL_Y)
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


def sobel_magnitude(img: np.ndarray) -> np.ndarray:
    """Gradient magnitude sqrt(Gx^2 + Gy^2), rounded and clamped to 8 bits."""
    img = as_gray(img)
    gx = _correlate3(img, SOBEL_X).astype(np.float64)
    gy = _correlate3(img, SOBEL_Y).astype(np.float64)
    return np.clip(np.rint(np.hypot(gx, gy)), 0, 255).astype(np.uint8)


def sobel_or_combine(img: np.ndarray) -> np.ndarray:
    """Bitwise OR of the absolute-normalized X and Y sobel responses."""
    img = as_gray(img)
    return np.bitwise_or(abs_to_u8(sobel(img, "x")), abs_to_u8(sobel(img, "y")))


def laplacian(img: np.ndarray) -> np.ndarray:
    """Second-derivative response with the [[0,1,0],[1,-4,1],[0,1,0]] kernel."""
    return _correlate3(as_gray(img), LAPLACIAN_KERNEL)


def abs_to_u8(m: np.ndarray) -> np.ndarray:
    """Normalize a signed map: per value min(|v|, 255)."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"expected (h, w) signed map, got shape {m.shape}")
    return np.minimum(np.abs(m.astype(np.int64)), 255).astype(np.uint8)


def gaussian_kernel(sigma: float, ksize: int) -> np.ndarray:
    """Analytic 1-D Gaussian taps, normalized to unit sum."""
    if ksize < 1 or ksize % 2 == 0:
        raise ValueError(f"ksize must be odd and positive, got {ksize}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = ksize // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float = 1.0, ksize: int = 5) -> np.ndarray:
    """Separable Gaussian blur with replicated borders.

    Both passes run in float64; pixels are rounded to 8 bits once, at the
    end.
    """
    img = as_gray(img)
    k = gaussian_kernel(sigma, ksize)
    r = ksize // 2
    out = img.astype(np.float64)
    if r:
        h, w = img.shape
        px = np.pad(out, ((0, 0), (r, r)), mode="edge")
        out = sum(k[j] * px[:, j : j + w] for j in range(ksize))
        py = np.pad(out, ((r, r), (0, 0)), mode="edge")
        out = sum(k[i] * py[i : i + h, :] for i in range(ksize))
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _neighbor(a: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """out[y, x] = a[y+dy, x+dx], zero outside the image."""
    h, w = a.shape
    out = np.zeros_like(a)
    ys = slice(max(0, -dy), min(h, h - dy))
    xs = slice(max(0, -dx), min(w, w - dx))
    ysrc = slice(max(0, dy), min(h, h + dy))
    xsrc = slice(max(0, dx), min(w, w + dx))
    out[ys, xs] = a[ysrc, xsrc]
    return out


# Forward step per quantized gradient direction; backward is the negation.
_DIRECTION_STEPS = ((1, 0), (1, 1), (0, 1), (-1, 1))


def canny(img: np.ndarray, low: float = 50, high: float = 150) -> np.ndarray:
    """Binary Canny edge map with values in {0, 255}.

    Stages: sobel gradients, non-maximum suppression along the gradient
    direction quantized to 4 bins, then double-threshold hysteresis with
    8-connectivity.  A pixel survives NMS iff its L2 magnitude is >= the
    backward neighbor and strictly > the forward neighbor along the
    quantized direction (out-of-image neighbors count as 0), so tied
    two-pixel ridges keep exactly one line.  Strong means magnitude >=
    ``high``; weak pixels (>= ``low``) survive iff 8-connected to a strong
    pixel.
    """
    img = as_gray(img)
    if not 0 <= low <= high:
        raise ValueError(f"thresholds must satisfy 0 <= low <= high, got {low}, {high}")
    gx = _correlate3(img, SOBEL_X).astype(np.float64)
    gy = _correlate3(img, SOBEL_Y).astype(np.float64)
    mag = np.hypot(gx, gy)

    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    bin_masks = [
        (angle < 22.5) | (angle >= 157.5),
        (angle >= 22.5) & (angle < 67.5),
        (angle >= 67.5) & (angle < 112.5),
        (angle >= 112.5) & (angle < 157.5),
    ]
    forward = np.select(bin_masks, [_neighbor(mag, dx, dy) for dx, dy in _DIRECTION_STEPS])
    backward = np.select(bin_masks, [_neighbor(mag, -dx, -dy) for dx, dy in _DIRECTION_STEPS])
    ridge = (mag > forward) & (mag >= backward)

    weak = ridge & (mag >= low)
    strong = ridge & (mag >= high)
    if not strong.any():
        return np.zeros_like(img)
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    strong_labels = np.unique(labels[strong])
    edges = np.isin(labels, strong_labels[strong_labels > 0])
    return np.where(edges, 255, 0).astype(np.uint8)


@dataclass(frozen=True)
class EdgeConfig:
    """Knobs for :func:`edge_enhance`.

    ``operator`` picks the edge response fused with Canny: ``"laplacian"``
    (default) or ``"sobel"`` (abs + bitwise-OR combination).  ``order``
    picks the stage layout: ``"parallel"`` blurs the input once and feeds
    both branches from the blurred image; ``"sequential"`` runs the edge
    operator on the raw input, blurs its response, and runs Canny on that
    blurred response.
    """

    sigma: float = 1.0
    ksize: int = 5
    canny_low: float = 50.0
    canny_high: float = 150.0
    weight_laplacian: float = 1.0
    weight_canny: float = 1.0
    operator: str = "laplacian"
    order: str = "parallel"

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.ksize < 1 or self.ksize % 2 == 0:
            raise ValueError(f"ksize must be odd and positive, got {self.ksize}")
        if not 0 <= self.canny_low <= self.canny_high:
            raise ValueError(
                f"need 0 <= canny_low <= canny_high, got {self.canny_low}, {self.canny_high}"
            )
        if self.operator not in OPERATORS:
            raise ValueError(f"operator must be one of {OPERATORS}, got {self.operator!r}")
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}, got {self.order!r}")

    def to_text(self) -> str:
        """Flat key=value block, one field per line."""
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "EdgeConfig":
        kwargs = {}
        casts = {f.name: f.type for f in fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or key not in casts:
                raise ValueError(f"bad edge config line {lineno}: {raw!r}")
            kwargs[key] = value if casts[key] == "str" else int(value) if casts[key] == "int" else float(value)
        return cls(**kwargs)


def _operator_response(img: np.ndarray, operator: str) -> np.ndarray:
    if operator == "laplacian":
        return abs_to_u8(laplacian(img))
    return sobel_or_combine(img)


def edge_enhance(img: np.ndarray, cfg: EdgeConfig = EdgeConfig()) -> np.ndarray:
    """Fuse an edge-operator response with a Canny map.

    Output is the per-pixel weighted sum of the two maps, rounded and
    saturated to [0, 255]; with the default unit weights this is a plain
    saturating add.
    """
    img = as_gray(img)
    if cfg.order == "parallel":
        blurred = gaussian_blur(img, cfg.sigma, cfg.ksize)
        edges = _operator_response(blurred, cfg.operator)
        outline = canny(blurred, cfg.canny_low, cfg.canny_high)
    else:
        edges = gaussian_blur(_operator_response(img, cfg.operator), cfg.sigma, cfg.ksize)
        outline = canny(edges, cfg.canny_low, cfg.canny_high)
    fused = cfg.weight_laplacian * edges.astype(np.float64) + cfg.weight_canny * outline
    return np.clip(np.rint(fused), 0, 255).astype(np.uint8)
