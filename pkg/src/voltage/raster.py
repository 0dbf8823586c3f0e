"""Binary/gray rasters, binarization and projection profiles.

Images are plain numpy arrays indexed ``[row, col]`` with row 0 at the top.
Gray images are ``uint8`` intensities (dark ink on a light page); binary
images are ``uint8`` arrays holding 1 for ink and 0 for background.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, order=True)
class Rect:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"degenerate rect {self}")

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    def within(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x2 <= width and self.y2 <= height

    def shift(self, dx: int, dy: int) -> "Rect":
        return Rect(self.x + dx, self.y + dy, self.w, self.h)

    def intersect(self, other: "Rect") -> "Rect | None":
        x, y = max(self.x, other.x), max(self.y, other.y)
        x2, y2 = min(self.x2, other.x2), min(self.y2, other.y2)
        if x2 <= x or y2 <= y:
            return None
        return Rect(x, y, x2 - x, y2 - y)

    def union(self, other: "Rect") -> "Rect":
        x, y = min(self.x, other.x), min(self.y, other.y)
        return Rect(x, y, max(self.x2, other.x2) - x, max(self.y2, other.y2) - y)

    @property
    def area(self) -> int:
        return self.w * self.h

    def iou(self, other: "Rect") -> float:
        inter = self.intersect(other)
        if inter is None:
            return 0.0
        return inter.area / (self.area + other.area - inter.area)


def as_binary(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D raster, got shape {arr.shape}")
    return (arr != 0).astype(np.uint8)


def otsu_threshold(gray: np.ndarray) -> int:
    """Return t such that intensities < t are ink; 0 when the image is flat."""
    hist = np.bincount(np.asarray(gray, dtype=np.uint8).ravel(), minlength=256).astype(float)
    total = hist.sum()
    levels = np.arange(256, dtype=float)
    # class 0 = intensities < t, for t = 1..255
    w0 = np.cumsum(hist)[:-1]
    s0 = np.cumsum(hist * levels)[:-1]
    w1 = total - w0
    s1 = (hist * levels).sum() - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = w0 * w1 * (s0 / w0 - s1 / w1) ** 2
    between = np.nan_to_num(between, nan=0.0)
    if between.max() <= 0:
        return 0
    return int(np.argmax(between)) + 1


def binarize(gray, threshold: int | None = None) -> np.ndarray:
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError(f"expected a 2D gray image, got shape {gray.shape}")
    if threshold is None:
        threshold = otsu_threshold(gray)
    return (gray < threshold).astype(np.uint8)


def to_gray(bits: np.ndarray) -> np.ndarray:
    """Render a binary image as dark-on-light gray (ink 0, background 255)."""
    return np.where(as_binary(bits) == 1, 0, 255).astype(np.uint8)


def row_projection(img: np.ndarray) -> np.ndarray:
    return as_binary(img).sum(axis=1).astype(np.int64)


def col_projection(img: np.ndarray) -> np.ndarray:
    return as_binary(img).sum(axis=0).astype(np.int64)


def enhanced_col_projection(img: np.ndarray, penalty_weight: float) -> np.ndarray:
    """Column profile where each ink pixel weighs ``1 + penalty_weight * y / height``.

    Ink low in the image counts more, so columns bridged only by strokes near
    the top of a line (overhanging modifiers) still show up as valleys.
    """
    if penalty_weight < 0:
        raise ValueError("penalty_weight must be nonnegative")
    bits = as_binary(img)
    height = bits.shape[0]
    if penalty_weight == 0:
        return bits.sum(axis=0).astype(float)
    weights = 1.0 + penalty_weight * np.arange(height, dtype=float) / height
    return weights @ bits.astype(float)


def crop(img: np.ndarray, r: Rect) -> np.ndarray:
    h, w = img.shape
    if not r.within(w, h):
        raise IndexError(f"{r} outside {w}x{h} image")
    return img[r.y:r.y2, r.x:r.x2].copy()


def ink_bbox(img: np.ndarray) -> Rect | None:
    bits = as_binary(img)
    rows = np.flatnonzero(bits.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(bits.any(axis=0))
    return Rect(int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def tight_crop(img: np.ndarray, r: Rect | None = None) -> tuple[np.ndarray, Rect | None]:
    """Crop to the minimal ink box inside ``r``; returns the crop and its rect.

    A blank region yields an empty (0x0) array and ``None``.
    """
    if r is None:
        r = Rect(0, 0, img.shape[1], img.shape[0])
    sub = crop(img, r)
    box = ink_bbox(sub)
    if box is None:
        return np.zeros((0, 0), dtype=np.uint8), None
    return crop(sub, box), box.shift(r.x, r.y)
