"""graspkit command line: dataset pipeline and kinematics utilities."""

from __future__ import annotations

import argparse
import io
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import camera_calib as cc
from . import dataset_io as dio
from . import kinematics as kin
from .core_types import GraspRect5D, Pose6D
from .errors import GraspKitError, MissingGroundTruth
from .extraction import extract_pose
from .image_io import crop_resize, load_depth, load_rgb, save_rgb
from .translation import (
    DEFAULT_REFINE_H,
    DEFAULT_REFINE_W,
    DEFAULT_THRESHOLD,
    centroid,
    object_mask,
    refine_rect,
    translate_rect,
)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}

# Built-in defaults; a --config file overrides these and flags override both.
DEFAULTS = {
    "threshold": DEFAULT_THRESHOLD,
    "otsu": False,
    "invert": False,
    "translate": True,
    "h": DEFAULT_REFINE_H,
    "w": DEFAULT_REFINE_W,
    "line_width": 3,
    "crop": 300,
    "size": 256,
    "method": "bilinear",
    "eps": 1e-8,
    "max_iter": 100,
    "dt": 0.01,
    "duration": 1.0,
    "seed": 0,
    "depth_window": cc.DEPTH_WINDOW,
}

# Neutral pose used as the Newton-Raphson starting guess when none is given.
HOME_DEG = (0.0, -30.0, 0.0, 60.0, 0.0, 60.0, 0.0)


class CliError(Exception):
    pass


def _read_config(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{lineno}: expected key = value")
        key = key.strip().replace("-", "_")
        if key not in DEFAULTS:
            raise CliError(f"{path}:{lineno}: unknown setting {key!r}")
        default = DEFAULTS[key]
        val = val.strip()
        if isinstance(default, bool):
            out[key] = val.lower() in ("1", "true", "yes", "on")
        else:
            out[key] = type(default)(val)
    return out


def _settings(args) -> dict:
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        merged.update(_read_config(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    for key in ("h", "w", "dt", "eps"):
        if merged[key] <= 0:
            raise CliError(f"{key} must be positive")
    return merged


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out) -> None:
    if out:
        _atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _gather_images(inputs) -> list[Path]:
    files = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            files.extend(f for f in p.iterdir() if f.suffix.lower() in IMAGE_SUFFIXES)
        else:
            files.append(p)
    return sorted(files, key=lambda f: (f.stem, str(f)))


def _report_error(ident: str, exc: Exception) -> None:
    print(f"error {ident}: {exc}", file=sys.stderr)


def _threshold(cfg) -> int | None:
    return None if cfg["otsu"] else cfg["threshold"]


def _pose_for(path: Path, cfg, translate: bool, object_dir=None):
    img = load_rgb(path)
    pose = extract_pose(img, seed=cfg["seed"])
    if translate:
        source = img
        if object_dir:
            source = load_rgb(Path(object_dir) / path.name)
        mask = object_mask(source, _threshold(cfg), cfg["invert"])
        pose = translate_rect(pose, centroid(mask))
    return pose


def _parse_q(values, degrees: bool) -> np.ndarray:
    q = np.array(values, dtype=float)
    if q.shape != (kin.N_JOINTS,):
        raise CliError(f"expected {kin.N_JOINTS} joint angles")
    return np.radians(q) if degrees else q


def _arm(args) -> kin.DHTable:
    if args.arm:
        dh = kin.parse_arm_model(Path(args.arm).read_text())
    else:
        dh = kin.anukul_arm()
    if args.no_tool:
        dh = kin.DHTable(dh.rows, dh.limits, dh.base, np.eye(4), dh.lengths)
    return dh


# --- subcommands ----------------------------------------------------------------------

def cmd_prep(args) -> int:
    cfg = _settings(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failed = False
    for f in _gather_images(args.inputs):
        try:
            img = crop_resize(load_rgb(f), cfg["crop"], cfg["size"], args.left, args.top, cfg["method"])
            save_rgb(img, out_dir / (f.stem + ".png"))
        except (OSError, ValueError, GraspKitError) as exc:
            _report_error(f.stem, exc)
            failed = True
    return int(failed)


def _pose_lines(args, translate: bool) -> int:
    cfg = _settings(args)
    lines, failed = [], False
    for f in _gather_images(args.inputs):
        try:
            pose = _pose_for(f, cfg, translate, getattr(args, "object_dir", None))
        except (OSError, ValueError, GraspKitError) as exc:
            _report_error(f.stem, exc)
            failed = True
            continue
        lines.append(f"{f.stem} {pose.center[0]:.6f} {pose.center[1]:.6f} {pose.theta:.6f}\n")
    _emit("".join(lines), args.out)
    return int(failed)


def cmd_extract(args) -> int:
    return _pose_lines(args, translate=False)


def cmd_translate(args) -> int:
    return _pose_lines(args, translate=True)


def cmd_annotate(args) -> int:
    cfg = _settings(args)
    records, failed = [], False
    for f in _gather_images(args.inputs):
        try:
            pose = _pose_for(f, cfg, cfg["translate"], args.object_dir)
            records.append(dio.AnnotationRecord(f.stem, refine_rect(pose, cfg["h"], cfg["w"])))
        except (OSError, ValueError, GraspKitError) as exc:
            _report_error(f.stem, exc)
            failed = True
    _emit(dio.format_annotation(records), args.out)
    return int(failed)


def cmd_render(args) -> int:
    cfg = _settings(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failed = False
    truths = dio.read_cornell_dir(args.truth_dir)
    for image_id, rec in sorted(truths.items()):
        if rec.dropped:
            print(f"{image_id}: dropped {rec.dropped} non-finite rectangle(s)", file=sys.stderr)
        src = Path(args.truth_dir) / f"{image_id}.png"
        try:
            img = load_rgb(src)
            if args.all:
                chosen = list(enumerate(rec.rectangles))
            elif args.index < len(rec.rectangles):
                chosen = [(None, rec.rectangles[args.index])]
            else:
                raise GraspKitError(f"no rectangle #{args.index}")
            for k, rect in chosen:
                name = image_id if k is None else f"{image_id}_{k}"
                save_rgb(dio.render_paired_image(img, rect, cfg["line_width"]), out_dir / f"{name}.png")
        except (OSError, ValueError, GraspKitError) as exc:
            _report_error(image_id, exc)
            failed = True
    return int(failed)


def cmd_evaluate(args) -> int:
    preds = dio.read_annotation(Path(args.predictions).read_text())
    truths = dio.read_cornell_dir(args.truth_dir)
    try:
        report = dio.evaluate(preds, truths)
    except MissingGroundTruth as exc:
        for ident in exc.ids:
            print(f"missing ground truth: {ident}", file=sys.stderr)
        return 1
    sys.stdout.write(report.summary())
    if args.csv:
        _atomic_write(args.csv, report.to_csv())
    return 0


def _depth_for(args, image_id: str) -> cc.DepthImage:
    if args.depth:
        return cc.DepthImage(load_depth(args.depth))
    return cc.DepthImage(load_depth(Path(args.depth_dir) / f"{image_id}.png"))


def cmd_map(args) -> int:
    cfg = _settings(args)
    if not (args.depth or args.depth_dir):
        raise CliError("one of --depth or --depth-dir is required")
    k = cc.CameraIntrinsics.parse(Path(args.intrinsics).read_text())
    transform = cc.RigidTransform.parse(Path(args.calibration).read_text())
    records = dio.read_annotation(Path(args.annotation).read_text())
    lines, failed = [], False
    for rec in sorted(records, key=lambda r: r.image_id):
        try:
            g = cc.map_grasp_to_robot(rec.grasp, _depth_for(args, rec.image_id), k, transform,
                                      cfg["depth_window"])
        except (OSError, IndexError, GraspKitError) as exc:
            _report_error(rec.image_id, exc)
            failed = True
            continue
        x, y, z = g.position
        lines.append(f"{rec.image_id} {x:.6f} {y:.6f} {z:.6f} {g.yaw:.6f}\n")
    _emit("".join(lines), args.out)
    return int(failed)


def cmd_calibrate(args) -> int:
    k = cc.CameraIntrinsics.parse(Path(args.intrinsics).read_text())
    corr = cc.read_correspondences(Path(args.correspondences).read_text())
    transform, rms = cc.calibrate(corr, k)
    _emit(transform.format(), args.out)
    print(f"correspondences: {len(corr)}  rms residual: {rms * 1000.0:.3f} mm", file=sys.stderr)
    return 0


def cmd_fk(args) -> int:
    dh = _arm(args)
    pose = kin.forward_kinematics(dh, _parse_q(args.q, args.deg))
    for row in pose.matrix:
        print(" ".join(f"{x: .9f}" for x in row))
    return 0


def _rpy_matrix(roll, pitch, yaw) -> np.ndarray:
    cr, sr, cp, sp, cy, sy = (math.cos(roll), math.sin(roll), math.cos(pitch),
                              math.sin(pitch), math.cos(yaw), math.sin(yaw))
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return rz @ ry @ rx


def grasp_target(position, yaw: float) -> Pose6D:
    """Top-down grasp: tool z pointing at the table, rotated by ``yaw``."""
    return Pose6D.from_rt(_rpy_matrix(math.pi, 0.0, yaw), position)


def _read_robot_grasps(path) -> list[tuple[str, Pose6D]]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        f = line.split()
        if not f:
            continue
        if len(f) != 5:
            raise CliError(f"{path}:{lineno}: expected '<id> <x> <y> <z> <yaw>'")
        x, y, z, yaw = map(float, f[1:])
        out.append((f[0], grasp_target((x, y, z), yaw)))
    return out


def cmd_ik(args) -> int:
    cfg = _settings(args)
    dh = _arm(args)
    if args.grasps:
        targets = _read_robot_grasps(args.grasps)
    elif args.xyz:
        rpy = np.radians(args.rpy) if args.deg else np.array(args.rpy)
        targets = [("target", Pose6D.from_rt(_rpy_matrix(*rpy), args.xyz))]
    else:
        raise CliError("one of --grasps or --xyz is required")
    initial = _parse_q(args.initial, args.deg) if args.initial else np.radians(HOME_DEG)
    lines, failed = [], False
    for ident, target in targets:
        try:
            res = kin.ik_newton_raphson(dh, target, initial, cfg["eps"], cfg["max_iter"],
                                        damping=args.damping)
        except GraspKitError as exc:
            _report_error(ident, exc)
            failed = True
            continue
        failed |= not res.converged
        q = np.degrees(res.solution) if args.deg else res.solution
        lines.append(f"{ident} {int(res.converged)} {res.iterations} {res.final_error_norm:.3e} "
                     + " ".join(f"{x:.9g}" for x in q) + "\n")
    _emit("".join(lines), args.out)
    return int(failed)


def cmd_traj(args) -> int:
    cfg = _settings(args)
    dh = _arm(args)
    start = _parse_q(args.start, args.deg) if args.start else np.radians(HOME_DEG)
    traj = kin.resolved_rate(dh, start, kin.constant_velocity(args.vel), cfg["dt"], cfg["duration"])
    buf = io.StringIO()
    kin.write_trajectory_log(traj, buf)
    _emit(buf.getvalue(), args.out)
    if args.plot:
        kin.plot_trajectory(traj, args.plot)
    if traj.truncated:
        print(f"trajectory truncated ({traj.truncated}) after {len(traj)} samples", file=sys.stderr)
        return 1
    return 0


# --- parser ---------------------------------------------------------------------------

def _segmentation_flags(p) -> None:
    p.add_argument("--threshold", type=int, help="binarisation threshold 0-255 (default 127)")
    p.add_argument("--otsu", action="store_const", const=True, help="pick the threshold with Otsu")
    p.add_argument("--invert", action="store_const", const=True,
                   help="object darker than the table")
    p.add_argument("--object-dir", help="untagged images (same names) to segment instead")


def _arm_flags(p) -> None:
    p.add_argument("--arm", help="arm model file (default: built-in Anukul model)")
    p.add_argument("--no-tool", action="store_true", help="drop the L6 tool offset")
    p.add_argument("--deg", action="store_true", help="angles in degrees")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graspkit", description=__doc__)
    parser.add_argument("--config", help="key = value settings file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="crop and resize camera images")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--crop", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--left", type=int)
    p.add_argument("--top", type=int)
    p.add_argument("--method", choices=sorted(["nearest", "bilinear"]))
    p.set_defaults(func=cmd_prep)

    for name, func, text in (("extract", cmd_extract, "rectangle pose from tagged images"),
                             ("translate", cmd_translate, "pose moved onto the object centroid")):
        p = sub.add_parser(name, help=text)
        p.add_argument("inputs", nargs="*")
        p.add_argument("--out", help="write lines here instead of stdout")
        p.add_argument("--seed", type=int)
        if name == "translate":
            _segmentation_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("annotate", help="extract, translate, refine and save annotations")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--out", help="annotation file (default stdout)")
    p.add_argument("--translate", dest="translate", action="store_const", const=True)
    p.add_argument("--no-translate", dest="translate", action="store_const", const=False)
    p.add_argument("--h", type=float, help="refined plate-side length in pixels")
    p.add_argument("--w", type=float, help="refined opening-side length in pixels")
    p.add_argument("--seed", type=int)
    _segmentation_flags(p)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("render", help="draw Cornell positive rectangles onto their images")
    p.add_argument("truth_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--line-width", dest="line_width", type=int)
    p.add_argument("--index", type=int, default=0, help="which rectangle to draw")
    p.add_argument("--all", action="store_true", help="one image per rectangle, suffixed _<k>")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("evaluate", help="rectangle-metric accuracy against Cornell truth")
    p.add_argument("predictions")
    p.add_argument("truth_dir")
    p.add_argument("--csv", help="per-item CSV output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("map", help="annotations -> robot-frame grasps")
    p.add_argument("annotation")
    p.add_argument("--depth", help="one depth PNG (mm) for every record")
    p.add_argument("--depth-dir", help="directory of <id>.png depth images (mm)")
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--depth-window", dest="depth_window", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("calibrate", help="fit the camera-to-robot transform")
    p.add_argument("correspondences", help="CSV rows u,v,d,rx,ry,rz")
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("fk", help="forward kinematics")
    p.add_argument("q", nargs=kin.N_JOINTS, type=float)
    _arm_flags(p)
    p.set_defaults(func=cmd_fk)

    p = sub.add_parser("ik", help="Newton-Raphson inverse pose")
    p.add_argument("--grasps", help="robot grasp file from 'map'")
    p.add_argument("--xyz", nargs=3, type=float)
    p.add_argument("--rpy", nargs=3, type=float, default=[math.pi, 0.0, 0.0])
    p.add_argument("--initial", nargs=kin.N_JOINTS, type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--damping", choices=["adaptive", "none"], default="adaptive")
    p.add_argument("--out")
    _arm_flags(p)
    p.set_defaults(func=cmd_ik)

    p = sub.add_parser("traj", help="resolved-rate trajectory log (and plot)")
    p.add_argument("--start", nargs=kin.N_JOINTS, type=float)
    p.add_argument("--vel", nargs=6, type=float, required=True, metavar="V",
                   help="vx vy vz wx wy wz (m/s, rad/s)")
    p.add_argument("--dt", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--out")
    p.add_argument("--plot", help="joint-angle vs time PNG")
    _arm_flags(p)
    p.set_defaults(func=cmd_traj)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, GraspKitError, OSError, ValueError) as exc:
        print(f"graspkit {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
