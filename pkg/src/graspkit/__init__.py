"""Grasp-rectangle post-processing and 7-DOF arm kinematics."""

from .core_types import (
    BinaryMask,
    GraspRect5D,
    GrayImage,
    OrientedRectCorners,
    PixelCluster,
    Pose6D,
    RgbImage,
    corners_to_rect5d,
    rect5d_to_corners,
)
from .errors import GraspKitError

__all__ = [
    "BinaryMask",
    "GraspKitError",
    "GraspRect5D",
    "GrayImage",
    "OrientedRectCorners",
    "PixelCluster",
    "Pose6D",
    "RgbImage",
    "corners_to_rect5d",
    "rect5d_to_corners",
]
