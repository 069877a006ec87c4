"""Geometric and raster value types shared across the toolkit.

Image coordinates follow the usual convention: ``u`` is the column (x),
``v`` is the row (y), origin at the top-left pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRectangle


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def angle_diff_mod_pi(a: float, b: float) -> float:
    """Unsigned difference of two orientations modulo pi, in [0, pi/2]."""
    d = math.fmod(abs(a - b), math.pi)
    return min(d, math.pi - d)


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit RGB raster stored as an (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixels, got shape {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise ValueError("image must be non-empty")
        if px.dtype != np.uint8:
            if np.any((px < 0) | (px > 255)):
                raise ValueError("channel values must lie in 0..255")
        object.__setattr__(self, "pixels", _frozen(px, np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def blank(cls, width: int, height: int, color=(0, 0, 0)) -> RgbImage:
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[...] = color
        return cls(px)


@dataclass(frozen=True, eq=False)
class GrayImage:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or 0 in v.shape:
            raise ValueError(f"expected non-empty (H, W) values, got shape {v.shape}")
        object.__setattr__(self, "values", _frozen(v, np.uint8))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2 or 0 in b.shape:
            raise ValueError(f"expected non-empty (H, W) bits, got shape {b.shape}")
        if b.dtype != bool and np.any((b != 0) & (b != 1)):
            raise ValueError("mask bits must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(b, bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True)
class GraspRect5D:
    """Grasp rectangle (x, y, theta, h, w) in pixels / radians.

    ``h`` is the gripper-plate side (drawn green), ``w`` the opening side
    (drawn yellow) which runs along ``theta``.
    """

    x: float
    y: float
    theta: float
    h: float
    w: float

    def __post_init__(self):
        vals = (self.x, self.y, self.theta, self.h, self.w)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite grasp rectangle {vals}")
        if self.h <= 0 or self.w <= 0:
            raise ValueError(f"h and w must be positive, got h={self.h}, w={self.w}")
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.x, self.y, self.theta, self.h, self.w)


@dataclass(frozen=True, eq=False)
class OrientedRectCorners:
    """Four (u, v) corners; edges 1-2 and 3-4 are the gripper-plate edges."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.shape != (4, 2):
            raise ValueError(f"expected 4 corners of shape (4, 2), got {p.shape}")
        object.__setattr__(self, "points", _frozen(p, float))

    def edge_lengths(self) -> np.ndarray:
        """Lengths of edges 1-2, 2-3, 3-4, 4-1."""
        return np.linalg.norm(np.roll(self.points, -1, axis=0) - self.points, axis=1)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.points)))


@dataclass(frozen=True, eq=False)
class Pose6D:
    """Homogeneous 4x4 rigid transform (rotation + translation in metres)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"expected 4x4 matrix, got {m.shape}")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("last row of a pose must be exactly (0, 0, 0, 1)")
        r = m[:3, :3]
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation block is not orthonormal with det +1")
        object.__setattr__(self, "matrix", _frozen(m, float))

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def position(self) -> np.ndarray:
        return self.matrix[:3, 3]

    @classmethod
    def from_rt(cls, rotation, translation) -> Pose6D:
        m = np.eye(4)
        m[:3, :3] = rotation
        m[:3, 3] = translation
        return cls(m)

    def __matmul__(self, other: Pose6D) -> Pose6D:
        return Pose6D(self.matrix @ other.matrix)


@dataclass(frozen=True, eq=False)
class PixelCluster:
    """Set of integer (u, v) pixel coordinates, stored as an (N, 2) array."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords)
        if c.size == 0:
            c = np.empty((0, 2), dtype=np.int64)
        if c.ndim != 2 or c.shape[1] != 2:
            raise ValueError(f"expected (N, 2) coordinates, got {c.shape}")
        if len(np.unique(c, axis=0)) != len(c):
            raise ValueError("pixel cluster contains duplicate coordinates")
        object.__setattr__(self, "coords", _frozen(c, np.int64))

    def __len__(self) -> int:
        return len(self.coords)

    def within(self, width: int, height: int) -> bool:
        u, v = self.coords[:, 0], self.coords[:, 1]
        return bool(np.all((u >= 0) & (u < width) & (v >= 0) & (v < height)))


def rect5d_to_corners(r: GraspRect5D) -> OrientedRectCorners:
    """Corners of ``r``, counter-clockwise, plate edges first (1-2) and third (3-4).

    In the rectangle's own frame (x along theta) the order is
    (-w/2, +h/2), (-w/2, -h/2), (+w/2, -h/2), (+w/2, +h/2), so edge 2-3
    points along theta.
    """
    c, s = math.cos(r.theta), math.sin(r.theta)
    hw, hh = r.w / 2.0, r.h / 2.0
    local = np.array([(-hw, hh), (-hw, -hh), (hw, -hh), (hw, hh)])
    rot = np.array([[c, -s], [s, c]])
    return OrientedRectCorners(local @ rot.T + (r.x, r.y))


def corners_to_rect5d(c: OrientedRectCorners) -> GraspRect5D:
    p = c.points
    lengths = c.edge_lengths()
    if lengths.min() < 1e-9:
        raise DegenerateRectangle(f"edge of length {lengths.min():.3g}")
    # shoelace; collinear corners have non-zero edges but no area
    x, y = p[:, 0], p[:, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
    if area < 1e-9 * max(1.0, lengths.max() ** 2):
        raise DegenerateRectangle("corners enclose no area")
    center = p.mean(axis=0)
    d = p[2] - p[1]
    return GraspRect5D(
        x=float(center[0]),
        y=float(center[1]),
        theta=math.atan2(d[1], d[0]),
        h=float((lengths[0] + lengths[2]) / 2.0),
        w=float((lengths[1] + lengths[3]) / 2.0),
    )
