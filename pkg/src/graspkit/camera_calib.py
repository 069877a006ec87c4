"""Image -> camera -> robot frame mapping for grasp poses."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .core_types import GraspRect5D, normalize_angle
from .errors import DegenerateConfiguration, InvalidDepth, LengthMismatch, MalformedFile

DEPTH_WINDOW = 5


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @classmethod
    def parse(cls, text: str) -> CameraIntrinsics:
        """Parse ``fx=... fy=... cx=... cy=...`` (any whitespace/newlines; ``#`` comments)."""
        vals = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0]
            for tok in line.split():
                key, sep, val = tok.partition("=")
                if not sep:
                    raise MalformedFile(f"expected key=value, got {tok!r}")
                try:
                    vals[key.strip().lower()] = float(val)
                except ValueError:
                    raise MalformedFile(f"bad number in {tok!r}") from None
        missing = {"fx", "fy", "cx", "cy"} - vals.keys()
        if missing:
            raise MalformedFile("intrinsics missing " + ", ".join(sorted(missing)))
        return cls(vals["fx"], vals["fy"], vals["cx"], vals["cy"])

    def format(self) -> str:
        return f"fx={self.fx!r}\nfy={self.fy!r}\ncx={self.cx!r}\ncy={self.cy!r}\n"


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Depth in metres, stored (height, width); zero marks an invalid reading."""

    depth: np.ndarray

    def __post_init__(self):
        d = np.array(self.depth, dtype=float)
        if d.ndim != 2 or 0 in d.shape:
            raise ValueError("depth must be a non-empty 2-D array")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("depth must be finite and non-negative")
        d.setflags(write=False)
        object.__setattr__(self, "depth", d)

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    def at(self, u: int, v: int) -> float:
        if not (0 <= u < self.width and 0 <= v < self.height):
            raise IndexError(f"pixel ({u}, {v}) outside {self.width}x{self.height} depth image")
        return float(self.depth[v, u])

    def sample(self, u: float, v: float, window: int = DEPTH_WINDOW) -> float:
        """Median of the valid depths in a ``window`` x ``window`` neighbourhood."""
        ui, vi = int(round(u)), int(round(v))
        if not (0 <= ui < self.width and 0 <= vi < self.height):
            raise IndexError(f"pixel ({u}, {v}) outside depth image")
        r = window // 2
        patch = self.depth[max(vi - r, 0):vi + r + 1, max(ui - r, 0):ui + r + 1]
        valid = patch[patch > 0]
        if valid.size == 0:
            raise InvalidDepth(f"no valid depth around ({ui}, {vi})")
        return float(np.median(valid))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must be orthonormal with det +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, p) -> np.ndarray:
        return np.asarray(p, dtype=float) @ self.rotation.T + self.translation

    def compose(self, other: RigidTransform) -> RigidTransform:
        """``self`` after ``other``."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    @property
    def yaw(self) -> float:
        """Rotation angle of the transform about the z axis."""
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def format(self) -> str:
        """Three rows ``r1 r2 r3 t`` of the 3x4 matrix."""
        return "".join(" ".join(repr(float(x)) for x in row) + "\n" for row in self.matrix[:3])

    @classmethod
    def parse(cls, text: str) -> RigidTransform:
        rows = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
        try:
            m = np.array(rows, dtype=float)
        except ValueError:
            raise MalformedFile("calibration must be 3 rows of 4 numbers") from None
        if m.shape != (3, 4):
            raise MalformedFile(f"calibration must be 3 rows of 4 numbers, got shape {m.shape}")
        # re-orthonormalise the 17-digit round trip
        u, _, vt = np.linalg.svd(m[:, :3])
        return cls(u @ vt, m[:, 3])


@dataclass(frozen=True)
class RobotGrasp:
    position: tuple[float, float, float]
    yaw: float


def deproject(u: float, v: float, d: float, k: CameraIntrinsics) -> np.ndarray:
    """Pinhole back-projection of pixel (u, v) at depth ``d`` metres."""
    if not d > 0:
        raise InvalidDepth(f"depth {d} at ({u}, {v}) is not a valid reading")
    return np.array([(u - k.cx) / k.fx * d, (v - k.cy) / k.fy * d, d])


def deproject_matrix(u: float, v: float, d: float, k: CameraIntrinsics) -> np.ndarray:
    """Same mapping via the inverse intrinsic matrix applied to (u*d, v*d, d)."""
    if not d > 0:
        raise InvalidDepth(f"depth {d} at ({u}, {v}) is not a valid reading")
    return np.linalg.inv(k.matrix) @ np.array([u * d, v * d, d])


def deproject_pixel(u: int, v: int, depth: DepthImage, k: CameraIntrinsics) -> np.ndarray:
    return deproject(u, v, depth.at(u, v), k)


def project(p, k: CameraIntrinsics) -> tuple[float, float]:
    x, y, z = p
    return k.fx * x / z + k.cx, k.fy * y / z + k.cy


def fit_rigid_transform(camera_points, robot_points) -> tuple[RigidTransform, float]:
    """Least-squares R, t minimising sum |R p_c + t - p_r|^2; returns (transform, RMS residual)."""
    pc = np.asarray(camera_points, dtype=float).reshape(-1, 3)
    pr = np.asarray(robot_points, dtype=float).reshape(-1, 3)
    if len(pc) != len(pr):
        raise LengthMismatch(f"{len(pc)} camera points vs {len(pr)} robot points")
    if len(pc) < 3:
        raise DegenerateConfiguration("need at least 3 correspondences")
    mc, mr = pc.mean(axis=0), pr.mean(axis=0)
    qc, qr = pc - mc, pr - mr
    sv = np.linalg.svd(qc, compute_uv=False)
    if sv[1] < 1e-9 * max(1.0, sv[0]):
        raise DegenerateConfiguration("camera points are collinear")
    u, _, vt = np.linalg.svd(qc.T @ qr)
    fix = np.diag([1.0, 1.0, np.sign(np.linalg.det(vt.T @ u.T)) or 1.0])
    rot = vt.T @ fix @ u.T
    t = mr - rot @ mc
    resid = pc @ rot.T + t - pr
    rms = float(np.sqrt((resid ** 2).sum(axis=1).mean()))
    return RigidTransform(rot, t), rms


def map_grasp_to_robot(g: GraspRect5D, depth: DepthImage, k: CameraIntrinsics,
                       transform: RigidTransform, window: int = DEPTH_WINDOW) -> RobotGrasp:
    """Image grasp -> camera point (pinhole) -> robot frame (rigid transform).

    Yaw assumes the image plane is parallel to the table after calibration:
    theta plus the calibration's rotation about z.
    """
    d = depth.sample(g.x, g.y, window)
    p_cam = deproject(g.x, g.y, d, k)
    p_robot = transform.apply(p_cam)
    return RobotGrasp(tuple(float(c) for c in p_robot), normalize_angle(g.theta + transform.yaw))


def read_correspondences(text: str) -> np.ndarray:
    """CSV rows ``u,v,d,rx,ry,rz`` -> (N, 6) array; a non-numeric header row is skipped."""
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), 1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if len(row) != 6:
            raise MalformedFile(f"line {lineno}: expected 6 fields, got {len(row)}")
        try:
            rows.append([float(x) for x in row])
        except ValueError:
            if lineno == 1:
                continue
            raise MalformedFile(f"line {lineno}: non-numeric field") from None
    return np.array(rows, dtype=float).reshape(-1, 6)


def calibrate(correspondences: np.ndarray, k: CameraIntrinsics) -> tuple[RigidTransform, float]:
    cam = np.array([deproject(u, v, d, k) for u, v, d in correspondences[:, :3]])
    return fit_rigid_transform(cam, correspondences[:, 3:])
