"""Cornell annotations, paired-image rendering, annotation files and the rectangle metric."""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core_types import (
    GraspRect5D,
    OrientedRectCorners,
    RgbImage,
    angle_diff_mod_pi,
    corners_to_rect5d,
    rect5d_to_corners,
)
from .errors import MalformedFile, MissingGroundTruth
from .extraction import GREEN_RGB, YELLOW_RGB

JACCARD_THRESHOLD = 0.25
ANGLE_THRESHOLD = math.radians(30.0)

CORNELL_POS_RE = re.compile(r"^(pcd\d+)cpos\.txt$")


@dataclass(frozen=True)
class CornellRecord:
    image_id: str
    rectangles: tuple[OrientedRectCorners, ...]
    dropped: int = 0


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    grasp: GraspRect5D


@dataclass(frozen=True)
class EvalItem:
    image_id: str
    matched: bool
    jaccard: float
    angle_diff: float


@dataclass
class EvalReport:
    items: list[EvalItem] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.items)

    @property
    def successes(self) -> int:
        return sum(it.matched for it in self.items)

    @property
    def accuracy(self) -> float:
        return self.successes / self.total if self.total else 0.0

    def summary(self) -> str:
        return (f"total: {self.total}\nsuccesses: {self.successes}\n"
                f"accuracy: {self.accuracy:.4f} ({100.0 * self.accuracy:.2f}%)\n")

    def to_csv(self) -> str:
        lines = ["id,matched,jaccard,angle_diff"]
        for it in self.items:
            lines.append(f"{it.image_id},{int(it.matched)},{it.jaccard:.6f},{it.angle_diff:.6f}")
        return "\n".join(lines) + "\n"


# --- Cornell positive-rectangle files -------------------------------------------------

def parse_cornell_rects(text) -> tuple[list[OrientedRectCorners], int]:
    """Parse 4-line ``x y`` blocks; returns (rectangles, number of NaN blocks skipped)."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    points = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise MalformedFile(f"line {lineno}: expected 2 numbers, got {len(tokens)} tokens")
        try:
            points.append((float(tokens[0]), float(tokens[1])))
        except ValueError as exc:
            raise MalformedFile(f"line {lineno}: {exc}") from None
    if len(points) % 4:
        raise MalformedFile(f"{len(points)} coordinate lines is not a multiple of 4")
    rects, skipped = [], 0
    for k in range(0, len(points), 4):
        block = np.array(points[k:k + 4])
        if not np.all(np.isfinite(block)):
            skipped += 1
            continue
        rects.append(OrientedRectCorners(block))
    return rects, skipped


def format_cornell_rects(rects) -> str:
    out = io.StringIO()
    for r in rects:
        for u, v in r.points:
            out.write(f"{u:.6f} {v:.6f}\n")
    return out.getvalue()


def read_cornell_dir(path) -> dict[str, CornellRecord]:
    """Load every ``pcdNNNNcpos.txt`` under ``path``; keyed by image id ``pcdNNNNr``."""
    records = {}
    for f in sorted(Path(path).iterdir()):
        m = CORNELL_POS_RE.match(f.name)
        if not m:
            continue
        rects, dropped = parse_cornell_rects(f.read_bytes())
        image_id = m.group(1) + "r"
        records[image_id] = CornellRecord(image_id, tuple(rects), dropped)
    return records


# --- rendering ------------------------------------------------------------------------

def bresenham(u0: int, v0: int, u1: int, v1: int) -> np.ndarray:
    """Integer pixels on the segment (u0, v0)-(u1, v1), endpoints included."""
    du, dv = abs(u1 - u0), -abs(v1 - v0)
    su = 1 if u0 < u1 else -1
    sv = 1 if v0 < v1 else -1
    err = du + dv
    out = []
    while True:
        out.append((u0, v0))
        if u0 == u1 and v0 == v1:
            break
        e2 = 2 * err
        if e2 >= dv:
            err += dv
            u0 += su
        if e2 <= du:
            err += du
            v0 += sv
    return np.array(out, dtype=np.int64)


def _stroke(px: np.ndarray, p, q, width: int, color) -> None:
    line = bresenham(int(round(p[0])), int(round(p[1])), int(round(q[0])), int(round(q[1])))
    offsets = np.arange(-((width - 1) // 2), width // 2 + 1)
    du, dv = np.meshgrid(offsets, offsets)
    stamp = np.column_stack([du.ravel(), dv.ravel()])
    pts = (line[:, None, :] + stamp[None, :, :]).reshape(-1, 2)
    h, w = px.shape[:2]
    keep = (pts[:, 0] >= 0) & (pts[:, 0] < w) & (pts[:, 1] >= 0) & (pts[:, 1] < h)
    pts = pts[keep]
    px[pts[:, 1], pts[:, 0]] = color


def render_paired_image(img: RgbImage, rect: OrientedRectCorners, line_width: int = 3) -> RgbImage:
    """Draw the rectangle: plate edges (1-2, 3-4) green, opening edges yellow.

    Opening edges go down first so the plate edges stay complete where
    they meet at the corners.
    """
    if line_width < 1:
        raise ValueError("line_width must be >= 1")
    px = np.array(img.pixels)
    c = rect.points
    _stroke(px, c[1], c[2], line_width, YELLOW_RGB)
    _stroke(px, c[3], c[0], line_width, YELLOW_RGB)
    _stroke(px, c[0], c[1], line_width, GREEN_RGB)
    _stroke(px, c[2], c[3], line_width, GREEN_RGB)
    return RgbImage(px)


# --- our annotation format ------------------------------------------------------------

def format_annotation(records) -> str:
    lines = []
    for rec in records:
        if not rec.image_id or any(ch.isspace() for ch in rec.image_id):
            raise ValueError(f"image id {rec.image_id!r} must be non-empty without whitespace")
        g = rec.grasp
        lines.append(f"{rec.image_id} {g.x:.6f} {g.y:.6f} {g.theta:.6f} {g.h:.6f} {g.w:.6f}")
    return "".join(line + "\n" for line in lines)


def write_annotation(records, sink) -> None:
    sink.write(format_annotation(records))


def read_annotation(source) -> list[AnnotationRecord]:
    text = source.read() if hasattr(source, "read") else source
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 6:
            raise MalformedFile(f"line {lineno}: expected 6 fields, got {len(fields)}")
        try:
            x, y, theta, h, w = (float(f) for f in fields[1:])
            grasp = GraspRect5D(x, y, theta, h, w)
        except ValueError as exc:
            raise MalformedFile(f"line {lineno}: {exc}") from None
        out.append(AnnotationRecord(fields[0], grasp))
    return out


# --- rectangle metric -----------------------------------------------------------------

def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise in a y-up frame)."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _ccw(poly: np.ndarray) -> np.ndarray:
    return poly if polygon_area(poly) >= 0 else poly[::-1]


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` against convex CCW ``clip``."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for k in range(n):
        if not out:
            break
        a, b = clip[k], clip[(k + 1) % n]
        ex, ey = b[0] - a[0], b[1] - a[1]

        def side(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

        inp, out = out, []
        prev = inp[-1]
        s_prev = side(prev)
        for cur in inp:
            s_cur = side(cur)
            if s_cur >= 0:
                if s_prev < 0:
                    t = s_prev / (s_prev - s_cur)
                    out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
                out.append(cur)
            elif s_prev >= 0:
                t = s_prev / (s_prev - s_cur)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            prev, s_prev = cur, s_cur
    return np.array(out, dtype=float).reshape(-1, 2)


def jaccard(a: OrientedRectCorners, b: OrientedRectCorners) -> float:
    pa, pb = _ccw(a.points), _ccw(b.points)
    area_a, area_b = polygon_area(pa), polygon_area(pb)
    if np.array_equal(pa, pb):
        return 1.0
    inter = abs(polygon_area(clip_convex(pa, pb)))
    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return float(min(1.0, max(0.0, inter / union)))


def rectangle_metric(pred: GraspRect5D, truth: OrientedRectCorners) -> tuple[bool, float, float]:
    """(matched, jaccard, angle difference modulo pi)."""
    j = jaccard(rect5d_to_corners(pred), truth)
    truth_theta = corners_to_rect5d(truth).theta
    dtheta = angle_diff_mod_pi(pred.theta, truth_theta)
    return (j > JACCARD_THRESHOLD and dtheta < ANGLE_THRESHOLD), j, dtheta


def _lookup(truths: dict[str, CornellRecord], image_id: str):
    if image_id in truths:
        return truths[image_id]
    # rendered variants carry a _<k> suffix
    base = re.sub(r"_\d+$", "", image_id)
    return truths.get(base)


def evaluate(preds, truths) -> EvalReport:
    """Success when the prediction matches any positive rectangle of its image."""
    if not isinstance(truths, dict):
        truths = {t.image_id: t for t in truths}
    missing = [p.image_id for p in preds if _lookup(truths, p.image_id) is None]
    if missing:
        raise MissingGroundTruth(missing)
    items = []
    for p in preds:
        best = (False, 0.0, math.pi / 2)
        for k, rect in enumerate(_lookup(truths, p.image_id).rectangles):
            m = rectangle_metric(p.grasp, rect)
            # matched beats unmatched, then higher jaccard
            if k == 0 or (m[0], m[1]) > (best[0], best[1]):
                best = m
        items.append(EvalItem(p.image_id, best[0], best[1], best[2]))
    items.sort(key=lambda it: it.image_id)
    return EvalReport(items)
