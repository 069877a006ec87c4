import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graspkit import GraspRect5D
from graspkit.camera_calib import (
    CameraIntrinsics,
    DepthImage,
    RigidTransform,
    calibrate,
    deproject,
    deproject_matrix,
    deproject_pixel,
    fit_rigid_transform,
    map_grasp_to_robot,
    project,
    read_correspondences,
)
from graspkit.errors import DegenerateConfiguration, InvalidDepth, LengthMismatch, MalformedFile
from graspkit.image_io import load_depth, save_depth

K = CameraIntrinsics(600.0, 600.0, 320.0, 240.0)


def random_rotation(rng):
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def test_deproject_examples():
    np.testing.assert_array_equal(deproject(320, 240, 0.8, K), [0, 0, 0.8])
    np.testing.assert_allclose(deproject(920, 240, 0.6, K), [0.6, 0, 0.6], atol=1e-15)
    with pytest.raises(InvalidDepth):
        deproject(1, 1, 0.0, K)


def test_matrix_form_agrees():
    rng = np.random.default_rng(0)
    for _ in range(100):
        k = CameraIntrinsics(*rng.uniform(300, 900, 2), *rng.uniform(100, 400, 2))
        u, v = rng.uniform(0, 640), rng.uniform(0, 480)
        d = rng.uniform(0.2, 3.0)
        assert np.abs(deproject(u, v, d, k) - deproject_matrix(u, v, d, k)).max() < 1e-12


@given(st.floats(0, 640), st.floats(0, 480), st.floats(0.1, 5))
def test_reprojection(u, v, d):
    pu, pv = project(deproject(u, v, d, K), K)
    assert abs(pu - u) < 1e-9 and abs(pv - v) < 1e-9


def test_depth_pixel_access_and_sampling():
    depth = np.full((9, 9), 0.5)
    depth[4, 4] = 0.0
    depth[3, 5] = 0.9
    img = DepthImage(depth)
    with pytest.raises(InvalidDepth):
        deproject_pixel(4, 4, img, K)
    assert img.sample(4, 4) == 0.5
    hole = DepthImage(np.pad(np.zeros((5, 5)), 2, constant_values=0.7))
    with pytest.raises(InvalidDepth):
        hole.sample(4, 4)
    assert hole.sample(4, 4, window=9) == 0.7
    with pytest.raises(IndexError):
        img.at(9, 0)


def test_intrinsics_file_round_trip():
    k = CameraIntrinsics.parse("# camera\nfx=615.2 fy=614.9\ncx=322.5  cy=241.0\n")
    assert k == CameraIntrinsics(615.2, 614.9, 322.5, 241.0)
    assert CameraIntrinsics.parse(k.format()) == k
    with pytest.raises(MalformedFile):
        CameraIntrinsics.parse("fx=1 fy=1 cx=1")
    with pytest.raises(MalformedFile):
        CameraIntrinsics.parse("fx=1 fy=1 cx=1 cy")


def test_fit_identity():
    pts = np.random.default_rng(1).uniform(-1, 1, (10, 3))
    t, rms = fit_rigid_transform(pts, pts)
    np.testing.assert_allclose(t.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(t.translation, 0, atol=1e-12)
    assert rms < 1e-12


def test_fit_quarter_turn_and_shift():
    pts = np.random.default_rng(2).uniform(-1, 1, (12, 3))
    rz = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    t, rms = fit_rigid_transform(pts, pts @ rz.T + (1, 0, 0))
    assert np.abs(t.rotation - rz).max() < 1e-9
    assert np.abs(t.translation - (1, 0, 0)).max() < 1e-9
    assert rms < 1e-9
    assert math.isclose(t.yaw, math.pi / 2)


def test_fit_noise_rms():
    rng = np.random.default_rng(3)
    for _ in range(20):
        rot, shift = random_rotation(rng), rng.uniform(-1, 1, 3)
        cam = rng.uniform(-0.5, 0.5, (40, 3)) + (0, 0, 1)
        robot = cam @ rot.T + shift + rng.normal(0, 1e-3, (40, 3))
        t, rms = fit_rigid_transform(cam, robot)
        assert rms <= 2e-3
        assert np.abs(t.rotation.T @ t.rotation - np.eye(3)).max() < 1e-9
        assert abs(np.linalg.det(t.rotation) - 1) < 1e-9


def test_fit_errors():
    with pytest.raises(LengthMismatch):
        fit_rigid_transform(np.zeros((4, 3)), np.zeros((3, 3)))
    with pytest.raises(DegenerateConfiguration):
        fit_rigid_transform(np.zeros((2, 3)), np.zeros((2, 3)))
    line = np.outer(np.arange(5.0), (1, 2, 3))
    with pytest.raises(DegenerateConfiguration):
        fit_rigid_transform(line, line)


def test_fit_handles_reflection_trap():
    # planar points with a mirrored target: the best proper rotation is still a rotation
    rng = np.random.default_rng(9)
    cam = np.column_stack([rng.uniform(-1, 1, (8, 2)), np.zeros(8)])
    robot = cam * (1, -1, 1)
    t, _ = fit_rigid_transform(cam, robot)
    assert np.linalg.det(t.rotation) > 0


def test_map_identity_on_axis():
    depth = DepthImage(np.full((480, 640), 0.8))
    g = map_grasp_to_robot(GraspRect5D(320, 240, 0.7, 30, 60), depth, K, RigidTransform.identity())
    np.testing.assert_allclose(g.position, (0, 0, 0.8), atol=1e-15)
    assert g.yaw == 0.7


def test_map_matches_matrix_chain():
    rng = np.random.default_rng(5)
    rot = random_rotation(rng)
    tr = RigidTransform(rot, (0.4, -0.2, 0.9))
    depth = DepthImage(rng.uniform(0.5, 1.5, (480, 640)))
    g_img = GraspRect5D(400.0, 100.0, -0.4, 30, 60)
    g = map_grasp_to_robot(g_img, depth, K, tr)
    d = depth.sample(400, 100)
    cam_h = np.append(np.linalg.inv(K.matrix) @ (400 * d, 100 * d, d), 1.0)
    np.testing.assert_allclose(g.position, (tr.matrix @ cam_h)[:3], atol=1e-9)


def test_map_depth_hole():
    depth = np.full((50, 50), 0.8)
    depth[20:31, 20:31] = 0
    with pytest.raises(InvalidDepth):
        map_grasp_to_robot(GraspRect5D(25, 25, 0, 10, 10), DepthImage(depth), K, RigidTransform.identity())


def test_map_equivariance():
    rng = np.random.default_rng(6)
    tr = RigidTransform(random_rotation(rng), rng.uniform(-1, 1, 3))
    extra = RigidTransform(random_rotation(rng), rng.uniform(-1, 1, 3))
    depth = DepthImage(np.full((480, 640), 1.1))
    g_img = GraspRect5D(100, 300, 0.2, 20, 40)
    base = map_grasp_to_robot(g_img, depth, K, tr)
    moved = map_grasp_to_robot(g_img, depth, K, extra.compose(tr))
    np.testing.assert_allclose(moved.position, extra.apply(base.position), atol=1e-12)


def test_transform_file_round_trip():
    t = RigidTransform(random_rotation(np.random.default_rng(7)), (0.1, 0.2, 0.3))
    back = RigidTransform.parse(t.format())
    assert np.abs(back.matrix - t.matrix).max() < 1e-15
    with pytest.raises(MalformedFile):
        RigidTransform.parse("1 0 0\n0 1 0\n0 0 1\n")


def test_correspondence_csv_and_calibrate():
    rng = np.random.default_rng(8)
    rot, shift = random_rotation(rng), np.array([0.5, 0.1, -0.3])
    rows = []
    for _ in range(40):
        u, v, d = rng.uniform(0, 640), rng.uniform(0, 480), rng.uniform(0.5, 1.5)
        rows.append((u, v, d, *(rot @ deproject(u, v, d, K) + shift)))
    text = "u,v,d,rx,ry,rz\n" + "".join(",".join(repr(float(x)) for x in r) + "\n" for r in rows)
    corr = read_correspondences(text)
    assert corr.shape == (40, 6)
    t, rms = calibrate(corr, K)
    assert np.abs(t.rotation - rot).max() < 1e-9 and rms < 1e-9
    with pytest.raises(MalformedFile):
        read_correspondences("1,2,3\n")


def test_depth_png_millimetres(tmp_path):
    d = np.array([[0.0, 0.8], [1.234, 65.535]])
    save_depth(d, tmp_path / "d.png")
    np.testing.assert_allclose(load_depth(tmp_path / "d.png"), d, atol=1e-12)
