"""7-DOF arm model: modified D-H forward kinematics, geometric Jacobian,
Newton-Raphson inverse pose and resolved-rate trajectories.

Angles are radians and lengths metres throughout; the arm model file uses
degrees and millimetres and is converted on load.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import numpy as np

from .core_types import Pose6D
from .errors import Diverged, JointLimitViolation, MalformedFile, NearSingular

N_JOINTS = 7
SINGULAR_TOL = 1e-8
DAMPING = 1e-3
DIVERGENCE_PATIENCE = 10


@dataclass(frozen=True)
class DHRow:
    alpha_prev: float
    a_prev: float
    d: float
    theta_offset: float = 0.0


@dataclass(frozen=True, eq=False)
class DHTable:
    rows: tuple[DHRow, ...]
    limits: np.ndarray
    base: np.ndarray = field(default_factory=lambda: np.eye(4))
    tool: np.ndarray = field(default_factory=lambda: np.eye(4))
    lengths: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.rows) != N_JOINTS:
            raise ValueError(f"expected {N_JOINTS} D-H rows, got {len(self.rows)}")
        lim = np.sort(np.asarray(self.limits, dtype=float).reshape(N_JOINTS, 2), axis=1)
        for name, val in (("limits", lim), ("base", np.array(self.base, float)),
                          ("tool", np.array(self.tool, float))):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def reach(self) -> float:
        """Upper bound on end-effector distance from the shoulder (joint 1 origin)."""
        total = sum(abs(r.a_prev) + abs(r.d) for r in self.rows)
        return total + float(np.linalg.norm(self.tool[:3, 3]))


def _load_default_model() -> str:
    return resources.files("graspkit").joinpath("data/anukul.arm").read_text()


def anukul_arm(with_tool: bool = True) -> DHTable:
    """The Anukul (Baxter) left arm; the L6 tool offset is optional."""
    dh = parse_arm_model(_load_default_model())
    if not with_tool:
        dh = DHTable(dh.rows, dh.limits, dh.base, np.eye(4), dh.lengths)
    return dh


def parse_arm_model(text: str) -> DHTable:
    """Parse an arm model file.

    Lines are ``L<k> <mm>`` link lengths, ``base_z <mm|L-name>``,
    ``tool_z <mm|L-name>`` and seven
    ``joint <alpha_prev deg> <a_prev mm> <d mm> <offset deg> <lim deg> <lim deg>``
    rows, where any length may name a link (``L1``). ``#`` starts a comment.
    """
    lengths: dict[str, float] = {}
    pending = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        pending.append((lineno, line))

    def num(tok: str, lineno: int) -> float:
        if tok in lengths:
            return lengths[tok]
        try:
            return float(tok)
        except ValueError:
            raise MalformedFile(f"line {lineno}: unknown length or number {tok!r}") from None

    for lineno, line in pending:
        key = line[0]
        if key.startswith("L") and key[1:].isdigit():
            if len(line) != 2:
                raise MalformedFile(f"line {lineno}: expected 'L<k> <mm>'")
            lengths[key] = num(line[1], lineno)

    rows, limits = [], []
    base_z = tool_z = 0.0
    for lineno, line in pending:
        key = line[0]
        if key.startswith("L") and key[1:].isdigit():
            continue
        if key in ("base_z", "tool_z"):
            if len(line) != 2:
                raise MalformedFile(f"line {lineno}: expected '{key} <mm>'")
            if key == "base_z":
                base_z = num(line[1], lineno)
            else:
                tool_z = num(line[1], lineno)
        elif key == "joint":
            if len(line) != 7:
                raise MalformedFile(f"line {lineno}: joint rows need 6 values")
            alpha, a, d, off, lo, hi = (num(t, lineno) for t in line[1:])
            rows.append(DHRow(math.radians(alpha), a / 1000.0, d / 1000.0, math.radians(off)))
            limits.append((math.radians(lo), math.radians(hi)))
        else:
            raise MalformedFile(f"line {lineno}: unknown key {key!r}")
    if len(rows) != N_JOINTS:
        raise MalformedFile(f"expected {N_JOINTS} joint rows, found {len(rows)}")
    base = np.eye(4)
    base[2, 3] = base_z / 1000.0
    tool = np.eye(4)
    tool[2, 3] = tool_z / 1000.0
    return DHTable(tuple(rows), np.array(limits), base, tool,
                   {k: v / 1000.0 for k, v in lengths.items()})


# --- forward kinematics ---------------------------------------------------------------

def _dh_matrix(row: DHRow, theta: float) -> np.ndarray:
    ca, sa = math.cos(row.alpha_prev), math.sin(row.alpha_prev)
    th = theta + row.theta_offset
    ct, st = math.cos(th), math.sin(th)
    return np.array([
        [ct, -st, 0.0, row.a_prev],
        [st * ca, ct * ca, -sa, -sa * row.d],
        [st * sa, ct * sa, ca, ca * row.d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def dh_transform(row: DHRow, theta: float) -> Pose6D:
    """RotX(alpha_prev) TransX(a_prev) RotZ(theta + offset) TransZ(d)."""
    return Pose6D(_dh_matrix(row, theta))


def _as_q(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape != (N_JOINTS,):
        raise ValueError(f"expected {N_JOINTS} joint angles, got {q.shape}")
    return q


def within_limits(dh: DHTable, q) -> bool:
    q = _as_q(q)
    return bool(np.all((q >= dh.limits[:, 0]) & (q <= dh.limits[:, 1])))


def clamp_limits(dh: DHTable, q) -> tuple[np.ndarray, np.ndarray]:
    """Clamp each angle into its joint interval; returns (clamped, per-joint flags)."""
    q = _as_q(q)
    out = np.clip(q, dh.limits[:, 0], dh.limits[:, 1])
    return out, out != q


def link_frames(dh: DHTable, q) -> list[np.ndarray]:
    """Base-frame transforms of frames 1..7 followed by the tool frame."""
    q = _as_q(q)
    frames = []
    t = np.array(dh.base)
    for row, theta in zip(dh.rows, q):
        t = t @ _dh_matrix(row, theta)
        frames.append(t)
    frames.append(t @ dh.tool)
    return frames


def forward_kinematics(dh: DHTable, q, check_limits: bool = True) -> Pose6D:
    q = _as_q(q)
    if check_limits and not within_limits(dh, q):
        bad = np.flatnonzero((q < dh.limits[:, 0]) | (q > dh.limits[:, 1])) + 1
        raise JointLimitViolation(f"joint(s) {bad.tolist()} outside limits")
    return Pose6D(link_frames(dh, q)[-1])


def geometric_jacobian(dh: DHTable, q) -> np.ndarray:
    """6x7 Jacobian (linear; angular) of the tool frame in the base frame.

    With the modified convention joint i turns about the z axis of frame i.
    """
    frames = link_frames(dh, q)
    p_end = frames[-1][:3, 3]
    jac = np.empty((6, N_JOINTS))
    for i in range(N_JOINTS):
        z = frames[i][:3, 2]
        jac[:3, i] = np.cross(z, p_end - frames[i][:3, 3])
        jac[3:, i] = z
    return jac


# --- pose error -----------------------------------------------------------------------

def rotation_log(r: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, angle in [0, pi]."""
    vee = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    s = 0.5 * np.linalg.norm(vee)
    c = 0.5 * (np.trace(r) - 1.0)
    angle = math.atan2(s, c)
    if angle < 1e-6:
        return 0.5 * vee * (1.0 + angle * angle / 6.0)
    if math.pi - angle > 1e-3:
        return vee * (angle / (2.0 * s))
    # near pi the antisymmetric part vanishes; read the axis off the diagonal
    aa = np.clip((np.diag(r) - c) / (1.0 - c), 0.0, None)
    k = int(np.argmax(aa))
    axis = np.empty(3)
    axis[k] = math.sqrt(aa[k])
    for j in range(3):
        if j != k:
            axis[j] = (r[k, j] + r[j, k]) / (2.0 * (1.0 - c) * axis[k])
    if np.dot(axis, vee) < 0:
        axis = -axis
    return axis / np.linalg.norm(axis) * angle


def pose_error(current: Pose6D, target: Pose6D) -> np.ndarray:
    """(target - current position, axis-angle of R_target R_current^T)."""
    dp = target.position - current.position
    dr = rotation_log(target.rotation @ current.rotation.T)
    return np.concatenate([dp, dr])


# --- pseudoinverse --------------------------------------------------------------------

def pseudo_inverse(jac: np.ndarray, tol: float = SINGULAR_TOL) -> np.ndarray:
    """Right pseudoinverse J^T (J J^T)^-1 of a wide, full-row-rank matrix."""
    jjt = jac @ jac.T
    smallest = np.linalg.svd(jjt, compute_uv=False)[-1]
    if smallest < tol:
        raise NearSingular(f"smallest singular value of J J^T is {smallest:.3g}")
    return np.linalg.solve(jjt, jac).T


def damped_pseudo_inverse(jac: np.ndarray, damping: float = DAMPING) -> np.ndarray:
    """J^T (J J^T + damping^2 I)^-1."""
    jjt = jac @ jac.T + damping ** 2 * np.eye(jac.shape[0])
    return np.linalg.solve(jjt, jac).T


def _pinv(jac: np.ndarray, damped_fallback: bool) -> tuple[np.ndarray, bool]:
    try:
        return pseudo_inverse(jac), False
    except NearSingular:
        if not damped_fallback:
            raise
        return damped_pseudo_inverse(jac), True


# --- inverse pose ---------------------------------------------------------------------

@dataclass(frozen=True)
class IKResult:
    solution: np.ndarray
    iterations: int
    final_error_norm: float
    converged: bool
    clamp_events: int = 0
    damped_steps: int = 0


def _weighted(vec_or_jac: np.ndarray, weight: float) -> np.ndarray:
    if weight == 1.0:
        return vec_or_jac
    out = np.array(vec_or_jac, dtype=float)
    out[3:] *= weight
    return out


def _solve_step(jac: np.ndarray, err: np.ndarray, damping: float | None,
                damped_fallback: bool) -> tuple[np.ndarray, bool]:
    if damping is None:
        jp, was_damped = _pinv(jac, damped_fallback)
        return jp @ err, was_damped
    return damped_pseudo_inverse(jac, damping) @ err, damping > 0


def _limited_step(dh: DHTable, q: np.ndarray, jac: np.ndarray, err: np.ndarray,
                  damping: float | None, damped_fallback: bool) -> tuple[np.ndarray, bool, bool]:
    """Newton step for ``err``; joints that would cross a limit are pinned there
    and the remaining joints re-solve for the residual while six stay free."""
    dq, damped = _solve_step(jac, err, damping, damped_fallback)
    lo, hi = dh.limits[:, 0], dh.limits[:, 1]
    locked = np.zeros(N_JOINTS, dtype=bool)
    hit = False
    for _ in range(N_JOINTS):
        over = ~locked & ((q + dq < lo) | (q + dq > hi))
        if not over.any():
            break
        hit = True
        locked |= over
        if (~locked).sum() < 6:
            break
        pinned = np.clip(q + dq, lo, hi) - q
        dq = np.where(locked, pinned, 0.0)
        free = ~locked
        dq_free, was_damped = _solve_step(jac[:, free], err - jac[:, locked] @ dq[locked],
                                          damping, damped_fallback)
        dq[free] = dq_free
        damped |= was_damped
    return dq, damped, hit


def ik_newton_raphson(dh: DHTable, target: Pose6D, initial, eps: float = 1e-8,
                      max_iter: int = 100, orientation_weight: float = 1.0,
                      damping: str = "adaptive", max_step: float | None = 0.2,
                      damped_fallback: bool = True) -> IKResult:
    """Newton-Raphson inverse pose.

    Each iteration solves J dq = e for the 6-vector pose error e and sets
    q <- clamp(q + dq). It stops once |dq| < eps, reporting convergence
    when the remaining error is below eps too, or after ``max_iter`` steps.
    Diverged is raised if the error grows for 10 consecutive steps.

    ``damping="none"`` solves with the plain right pseudoinverse
    J^T (J J^T)^-1, switching to a fixed 1e-3 damping when J J^T is near
    singular (or raising NearSingular without ``damped_fallback``).
    ``damping="adaptive"`` (default) uses J^T (J J^T + |e|^2 I)^-1, which
    tends to the plain pseudoinverse as the error vanishes but keeps
    near-singular targets from throwing the iteration around.

    Joints about to cross a limit are pinned there and the step re-solved
    with the other joints. ``max_step`` caps the largest single joint
    change per iteration (radians); None disables it.
    """
    if damping not in ("none", "adaptive"):
        raise ValueError(f"unknown damping mode {damping!r}")
    q = _as_q(initial).copy()
    if not within_limits(dh, q):
        raise JointLimitViolation("initial guess outside joint limits")
    prev_err = math.inf
    growing = 0
    clamp_events = damped = 0
    step_norm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        err = _weighted(pose_error(Pose6D(link_frames(dh, q)[-1]), target), orientation_weight)
        err_norm = float(np.linalg.norm(err))
        growing = growing + 1 if err_norm > prev_err else 0
        if growing >= DIVERGENCE_PATIENCE:
            raise Diverged(f"error grew for {growing} consecutive steps (|e|={err_norm:.3g})")
        prev_err = err_norm
        jac = _weighted(geometric_jacobian(dh, q), orientation_weight)
        lam = err_norm if damping == "adaptive" else None
        dq, was_damped, hit_limit = _limited_step(dh, q, jac, err, lam, damped_fallback)
        damped += was_damped
        biggest = float(np.abs(dq).max())
        if max_step is not None and biggest > max_step:
            dq *= max_step / biggest
        q, flags = clamp_limits(dh, q + dq)
        clamp_events += int(hit_limit or flags.any())
        step_norm = float(np.linalg.norm(dq))
        if step_norm < eps:
            break
    final = _weighted(pose_error(Pose6D(link_frames(dh, q)[-1]), target), orientation_weight)
    final_norm = float(np.linalg.norm(final))
    return IKResult(q, it, final_norm, step_norm < eps and final_norm < eps, clamp_events, damped)


# --- resolved-rate control ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    truncated: str | None = None

    def __len__(self) -> int:
        return len(self.t)


def resolved_rate(dh: DHTable, start, velocity: Callable[[float], np.ndarray], dt: float,
                  duration: float) -> Trajectory:
    """Integrate qdot = J^+(q) xdot(t) with explicit Euler.

    One sample per step from t=0 to t=duration inclusive. A near-singular
    Jacobian or a joint-limit crossing stops the trajectory at the last
    good sample and sets ``truncated``.
    """
    if dt <= 0 or duration < 0:
        raise ValueError("dt must be positive and duration non-negative")
    q = _as_q(start).copy()
    if not within_limits(dh, q):
        raise JointLimitViolation("start configuration outside joint limits")
    n = int(round(duration / dt))
    ts, qs, qds = [], [], []
    truncated = None
    for k in range(n + 1):
        t = k * dt
        try:
            jp = pseudo_inverse(geometric_jacobian(dh, q))
        except NearSingular:
            truncated = "near_singular"
            break
        qdot = jp @ np.asarray(velocity(t), dtype=float).reshape(6)
        ts.append(t)
        qs.append(q)
        qds.append(qdot)
        q = q + qdot * dt
        if k < n and not within_limits(dh, q):
            truncated = "joint_limit"
            break
    return Trajectory(np.array(ts), np.array(qs).reshape(-1, N_JOINTS),
                      np.array(qds).reshape(-1, N_JOINTS), truncated)


def constant_velocity(xdot) -> Callable[[float], np.ndarray]:
    v = np.asarray(xdot, dtype=float).reshape(6)
    return lambda t: v


# --- trajectory log -------------------------------------------------------------------

LOG_HEADER = (["step", "t"] + [f"theta{i}" for i in range(1, N_JOINTS + 1)]
              + [f"thetadot{i}" for i in range(1, N_JOINTS + 1)])


def write_trajectory_log(traj: Trajectory, sink) -> None:
    sink.write(",".join(LOG_HEADER) + "\n")
    for k in range(len(traj)):
        vals = [f"{x:.9g}" for x in traj.q[k]] + [f"{x:.9g}" for x in traj.qdot[k]]
        sink.write(f"{k + 1},{traj.t[k]:.6f}," + ",".join(vals) + "\n")


def read_trajectory_log(source) -> Trajectory:
    text = source.read() if hasattr(source, "read") else source
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != LOG_HEADER:
        raise MalformedFile("trajectory log header mismatch")
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(LOG_HEADER))
    return Trajectory(data[:, 1], data[:, 2:2 + N_JOINTS], data[:, 2 + N_JOINTS:])


def plot_trajectory(traj: Trajectory, path) -> None:
    """Joint angles against time, one line per joint."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4.5))
    for i in range(N_JOINTS):
        ax.plot(traj.t, traj.q[:, i], label=f"theta{i + 1}")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("joint angle (rad)")
    ax.set_title("Joint angles vs time")
    ax.legend(ncol=4, fontsize="small")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
