"""Move an extracted grasp rectangle onto the object's centroid."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core_types import BinaryMask, GraspRect5D, GrayImage, RgbImage
from .errors import EmptyMask
from .extraction import GREEN, YELLOW, ExtractedPose

DEFAULT_THRESHOLD = 127
# Fixed refinement size at 256x256; a configuration choice, not a measured value.
DEFAULT_REFINE_H = 30.0
DEFAULT_REFINE_W = 60.0


@dataclass(frozen=True)
class Moments:
    m00: int
    m10: int
    m01: int


@dataclass(frozen=True)
class Centroid:
    cx: float
    cy: float


def to_gray(img: RgbImage) -> GrayImage:
    px = img.pixels.astype(np.float64)
    g = 0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]
    return GrayImage(np.clip(np.floor(g + 0.5), 0, 255).astype(np.uint8))


def otsu_threshold(gray: GrayImage) -> int:
    from skimage.filters import threshold_otsu

    if gray.values.min() == gray.values.max():
        return int(gray.values.flat[0])
    return int(threshold_otsu(gray.values))


def binarize(gray: GrayImage, threshold: int = DEFAULT_THRESHOLD, invert: bool = False) -> BinaryMask:
    """Set bit iff value > threshold, flipped when ``invert``."""
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold must be in 0..255, got {threshold}")
    return BinaryMask((gray.values > threshold) ^ bool(invert))


def compute_moments(mask: BinaryMask) -> Moments:
    v, u = np.nonzero(mask.bits)
    return Moments(m00=int(len(u)), m10=int(u.sum(dtype=np.int64)), m01=int(v.sum(dtype=np.int64)))


def centroid(mask: BinaryMask) -> Centroid:
    m = compute_moments(mask)
    if m.m00 == 0:
        raise EmptyMask("mask has no set pixels")
    return Centroid(m.m10 / m.m00, m.m01 / m.m00)


def object_mask(img: RgbImage, threshold: int | None = DEFAULT_THRESHOLD, invert: bool = False,
                ignore_rectangle: bool = True) -> BinaryMask:
    """Gray -> binarize, with ``threshold=None`` selecting Otsu.

    Rectangle-coloured pixels are cleared when ``ignore_rectangle`` so a
    tagged image can be segmented directly.
    """
    gray = to_gray(img)
    t = otsu_threshold(gray) if threshold is None else threshold
    bits = np.array(binarize(gray, t, invert).bits)
    if ignore_rectangle:
        bits &= ~(GREEN.matches(img.pixels) | YELLOW.matches(img.pixels))
    return BinaryMask(bits)


def translate_rect(pose: ExtractedPose, c: Centroid) -> ExtractedPose:
    """Shift the rectangle so its centre lands on ``c``; orientation is kept.

    The plate midpoints move with it. The pixel clusters are left as the
    evidence they were extracted from.
    """
    dx = c.cx - pose.center[0]
    dy = c.cy - pose.center[1]
    return replace(
        pose,
        center=(c.cx, c.cy),
        m1=(pose.m1[0] + dx, pose.m1[1] + dy),
        m2=(pose.m2[0] + dx, pose.m2[1] + dy),
    )


def refine_rect(pose: ExtractedPose, h: float = DEFAULT_REFINE_H, w: float = DEFAULT_REFINE_W) -> GraspRect5D:
    if h <= 0 or w <= 0:
        raise ValueError("refined h and w must be positive")
    return GraspRect5D(pose.center[0], pose.center[1], pose.theta, h, w)
