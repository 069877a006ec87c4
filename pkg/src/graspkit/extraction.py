"""Recover a grasp rectangle's centre and orientation from a tagged image.

The rectangle's plate edges are drawn green. Their pixels are collected,
split into two groups with 2-means, and the line joining the two group
means gives the orientation; its midpoint gives the centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_types import PixelCluster, RgbImage
from .errors import DegenerateCluster, EmptyCluster

MAX_LLOYD_ITERATIONS = 100


@dataclass(frozen=True)
class ColorClass:
    """Inclusive per-channel bounds ((rmin, rmax), (gmin, gmax), (bmin, bmax))."""

    name: str
    bounds: tuple[tuple[int, int], tuple[int, int], tuple[int, int]]

    def __post_init__(self):
        for lo, hi in self.bounds:
            if not (0 <= lo <= hi <= 255):
                raise ValueError(f"bad channel bounds {self.bounds} for {self.name}")

    def matches(self, pixels: np.ndarray) -> np.ndarray:
        """Boolean mask of pixels in an (..., 3) array satisfying the predicate."""
        ok = np.ones(pixels.shape[:-1], dtype=bool)
        for ch, (lo, hi) in enumerate(self.bounds):
            ok &= (pixels[..., ch] >= lo) & (pixels[..., ch] <= hi)
        return ok


GREEN = ColorClass("Green", ((0, 100), (200, 255), (0, 100)))
YELLOW = ColorClass("Yellow", ((200, 255), (200, 255), (0, 100)))

GREEN_RGB = (0, 255, 0)
YELLOW_RGB = (255, 255, 0)


@dataclass(frozen=True)
class ExtractedPose:
    center: tuple[float, float]
    theta: float
    m1: tuple[float, float]
    m2: tuple[float, float]
    plate_clusters: tuple[PixelCluster, PixelCluster]


def collect_color_pixels(img: RgbImage, color: ColorClass = GREEN) -> PixelCluster:
    """All (u, v) pixels of ``img`` matching ``color``, in row-major order."""
    v, u = np.nonzero(color.matches(img.pixels))
    if len(u) == 0:
        raise EmptyCluster(f"no {color.name.lower()} pixels in image")
    return PixelCluster(np.column_stack([u, v]))


def _extreme_candidates(pts: np.ndarray) -> np.ndarray:
    # points are lexicographically sorted, so argmin/argmax ties resolve
    # independently of the caller's storage order
    u, v = pts[:, 0], pts[:, 1]
    idx = set()
    for f in (u, v, u + v, u - v):
        idx.add(int(np.argmin(f)))
        idx.add(int(np.argmax(f)))
    return np.array(sorted(idx))


def _lloyd(pts: np.ndarray, centroids: np.ndarray, rng: np.random.Generator):
    labels = None
    for _ in range(MAX_LLOYD_ITERATIONS):
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for k in (0, 1):
            members = labels == k
            if members.any():
                continue
            # empty cluster: restart it at the point farthest from the survivor
            other = centroids[1 - k]
            far = ((pts - other) ** 2).sum(axis=1)
            choices = np.flatnonzero(far == far.max())
            labels[rng.choice(choices)] = k
        centroids = np.array([pts[labels == k].mean(axis=0) for k in (0, 1)])
    return labels, centroids


def _plate_score(pts: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(spread across each group's principal line, total within-group SSE)."""
    across = 0.0
    sse = 0.0
    for k in (0, 1):
        grp = pts[labels == k]
        d = grp - grp.mean(axis=0)
        scatter = d.T @ d
        across += float(np.linalg.eigvalsh(scatter)[0])
        sse += float(np.trace(scatter))
    return across, sse


def kmeans2(cluster: PixelCluster, seed: int = 0, n_random: int = 4):
    """Split ``cluster`` into two groups with Lloyd's algorithm.

    Lloyd iterations start from every pair of bounding-box extreme points
    (the farthest pair among them included) plus ``n_random`` seeded random
    pairs. Each run goes to convergence or 100 iterations. Of the converged
    partitions, the one whose two groups are closest to straight lines is
    kept, ties going to the lower sum of squared errors. Plain minimum-SSE
    selection would split two long parallel edges across the middle once
    they are more than about twice as long as their separation.

    Returns ``(C1, M1, C2, M2)`` where M1 has the smaller u (ties: smaller v).
    """
    raw = np.asarray(cluster.coords)
    if len(raw) < 2:
        raise DegenerateCluster("need at least two points")
    order = np.lexsort((raw[:, 1], raw[:, 0]))
    pts_int = raw[order]
    if np.all(pts_int == pts_int[0]):
        raise DegenerateCluster("all points identical")
    pts = pts_int.astype(float)
    rng = np.random.default_rng(seed)

    cand = _extreme_candidates(pts)
    inits = [(i, j) for a, i in enumerate(cand) for j in cand[a + 1:]
             if not np.array_equal(pts[i], pts[j])]
    for _ in range(n_random):
        i, j = rng.choice(len(pts), size=2, replace=False)
        if not np.array_equal(pts[i], pts[j]):
            inits.append((int(i), int(j)))

    best = None
    for i, j in inits:
        labels, cents = _lloyd(pts, pts[[i, j]].copy(), rng)
        if not ((labels == 0).any() and (labels == 1).any()):
            continue
        across, sse = _plate_score(pts, labels)
        if best is None:
            best = (across, sse, labels, cents)
            continue
        tol = 1e-9 * max(1.0, abs(best[0]))
        if across < best[0] - tol or (abs(across - best[0]) <= tol and sse < best[1] - 1e-9):
            best = (across, sse, labels, cents)

    _, _, labels, cents = best
    groups = [pts_int[labels == k] for k in (0, 1)]
    if (cents[1, 0], cents[1, 1]) < (cents[0, 0], cents[0, 1]):
        groups.reverse()
        cents = cents[::-1]
    m1 = (float(cents[0, 0]), float(cents[0, 1]))
    m2 = (float(cents[1, 0]), float(cents[1, 1]))
    return PixelCluster(groups[0]), m1, PixelCluster(groups[1]), m2


def pose_from_midpoints(m1, m2) -> tuple[tuple[float, float], float]:
    """Centre and orientation of the line joining the two plate midpoints."""
    theta = math.atan2(m1[1] - m2[1], m1[0] - m2[0])
    center = ((m1[0] + m2[0]) / 2.0, (m1[1] + m2[1]) / 2.0)
    return center, theta


def extract_pose(img: RgbImage, color: ColorClass = GREEN, seed: int = 0) -> ExtractedPose:
    plate_pixels = collect_color_pixels(img, color)
    c1, m1, c2, m2 = kmeans2(plate_pixels, seed=seed)
    center, theta = pose_from_midpoints(m1, m2)
    return ExtractedPose(center=center, theta=theta, m1=m1, m2=m2, plate_clusters=(c1, c2))
