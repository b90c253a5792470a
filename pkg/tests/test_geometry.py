import numpy as np
import pytest

from handvote import io
from handvote.geometry import (CameraIntrinsics, DepthFrame, GeometryError, Pose, crop_resize,
                               depth_to_pointmap, project, unproject)
from handvote.synth import render_pose


def test_optical_axis_maps_to_principal_point(cam_simple):
    assert np.allclose(project([0, 0, 500], cam_simple), [64, 64])


def test_project_hand_value(cam_simple):
    u, v = project([100, 0, 500], cam_simple)
    assert u == pytest.approx(84.0)
    assert v == pytest.approx(64.0)


@pytest.mark.parametrize("z", [0.0, -10.0])
def test_project_behind_camera(cam_simple, z):
    with pytest.raises(GeometryError):
        project([1.0, 2.0, z], cam_simple)


def test_unproject_examples(cam_simple):
    assert np.allclose(unproject(64, 64, 250, cam_simple), [0, 0, 250])
    assert np.allclose(unproject(84, 64, 500, cam_simple), [100, 0, 500])
    with pytest.raises(GeometryError):
        unproject(10, 10, 0.0, cam_simple)


def test_project_unproject_round_trip():
    r = np.random.default_rng(0)
    cam = CameraIntrinsics(fx=231.7, fy=198.2, cx=63.3, cy=60.1, width=128, height=128)
    u = r.uniform(-50, 180, 1000)
    v = r.uniform(-50, 180, 1000)
    d = r.uniform(50, 3000, 1000)
    p = unproject(u, v, d, cam)
    assert np.array_equal(p[:, 2], d)
    uv = project(p, cam)
    assert np.max(np.abs(uv - np.stack([u, v], 1)) / np.maximum(1, np.abs(np.stack([u, v], 1)))) < 1e-9
    pts = np.stack([r.uniform(-200, 200, 1000), r.uniform(-200, 200, 1000), r.uniform(100, 900, 1000)], 1)
    uv = project(pts, cam)
    back = unproject(uv[:, 0], uv[:, 1], pts[:, 2], cam)
    assert np.max(np.abs(back - pts) / np.linalg.norm(pts, axis=1, keepdims=True)) < 1e-9


def test_intrinsics_invariants():
    with pytest.raises(GeometryError):
        CameraIntrinsics(0, 1, 1, 1, 4, 4)
    with pytest.raises(GeometryError):
        CameraIntrinsics(1, 1, 4, 1, 4, 4)


def test_depth_frame_invariants(cam48):
    d = np.zeros(cam48.shape)
    valid = np.zeros(cam48.shape, bool)
    valid[0, 0] = True
    with pytest.raises(GeometryError):
        DepthFrame(d, valid, cam48)
    d[1, 1] = 5.0
    with pytest.raises(GeometryError):
        DepthFrame(d, np.zeros(cam48.shape, bool), cam48)
    with pytest.raises(GeometryError):
        DepthFrame(np.zeros((3, 3)), np.zeros((3, 3), bool), cam48)


def test_pointmap_all_invalid(cam48):
    pm = depth_to_pointmap(DepthFrame(np.zeros(cam48.shape), np.zeros(cam48.shape, bool), cam48))
    assert not pm.valid.any()
    assert not pm.points.any()


def test_pointmap_single_pixel_at_principal_point(cam_simple):
    d = np.zeros(cam_simple.shape)
    d[64, 64] = 300.0
    pm = depth_to_pointmap(DepthFrame.from_depth(d, cam_simple))
    assert pm.valid.sum() == 1
    assert np.array_equal(pm.points[64, 64], [0.0, 0.0, 300.0])


def test_pointmap_preserves_rendered_depth(sample48):
    frame, _ = sample48
    pm = depth_to_pointmap(frame)
    assert np.array_equal(pm.valid, frame.valid)
    assert np.array_equal(pm.points[..., 2][frame.valid], frame.depth[frame.valid])
    assert not pm.points[~frame.valid].any()


def test_crop_identity(sample48):
    frame, _ = sample48
    cam = frame.intrinsics
    out = crop_resize(frame, ((cam.width - 1) / 2, (cam.height - 1) / 2), cam.width, cam.width)
    assert np.array_equal(out.depth, frame.depth)
    assert np.array_equal(out.valid, frame.valid)
    assert out.intrinsics == cam


def test_crop_downscale_halves_intrinsics(sample48):
    frame, _ = sample48
    cam = frame.intrinsics
    out = crop_resize(frame, ((cam.width - 1) / 2, (cam.height - 1) / 2), cam.width, cam.width // 2)
    c2 = out.intrinsics
    assert c2.fx == cam.fx / 2 and c2.fy == cam.fy / 2
    # pixel centers sit at integers, so the principal point halves about the -0.5 pixel corner
    assert c2.cx == pytest.approx((cam.cx + 0.5) / 2 - 0.5)
    assert c2.cy == pytest.approx((cam.cy + 0.5) / 2 - 0.5)
    assert out.shape == (24, 24)


def test_crop_points_agree_with_source(sample48):
    frame, _ = sample48
    # unit scale and an integer pixel offset: every output pixel is exactly one source pixel
    out = crop_resize(frame, (20.5, 22.5), 30, 30)
    src = depth_to_pointmap(frame)
    dst = depth_to_pointmap(out)
    assert np.array_equal(out.depth, frame.depth[8:38, 6:36])
    assert np.allclose(dst.points[out.valid], src.points[8:38, 6:36][out.valid], atol=1e-9)


def test_crop_outside_raises(sample48):
    frame, _ = sample48
    with pytest.raises(GeometryError):
        crop_resize(frame, (500.0, 500.0), 20, 20)
    with pytest.raises(GeometryError):
        crop_resize(frame, (20.0, 20.0), 0, 20)


def test_pgm_round_trip(tmp_path, sample48):
    frame, _ = sample48
    path = tmp_path / "f.pgm"
    io.write_depth(path, frame)
    data = path.read_bytes()
    assert data.startswith(b"P5\n48 48\n65535\n")
    back = io.read_depth(path)
    assert back.intrinsics == frame.intrinsics
    assert np.array_equal(back.valid, frame.valid)
    assert np.array_equal(back.depth, np.rint(frame.depth))
    # big-endian samples
    first = np.flatnonzero(frame.valid.ravel())[0]
    off = len(b"P5\n48 48\n65535\n") + 2 * first
    assert int.from_bytes(data[off:off + 2], "big") == int(np.rint(frame.depth.ravel()[first]))


def test_pgm_bad_magic(tmp_path, sample48):
    frame, _ = sample48
    path = tmp_path / "f.pgm"
    io.write_depth(path, frame)
    path.write_bytes(b"P2" + path.read_bytes()[2:])
    with pytest.raises(io.FormatError, match="offset 0"):
        io.read_depth(path)


def test_pose_file_round_trip(tmp_path, sample48):
    _, pose = sample48
    io.write_pose(tmp_path / "p.json", pose)
    back = io.read_pose(tmp_path / "p.json")
    assert back.joint_names == pose.joint_names
    assert np.array_equal(back.joints, pose.joints)


def test_pose_invariants():
    with pytest.raises(GeometryError):
        Pose(np.zeros((0, 3)))
    with pytest.raises(GeometryError):
        Pose([[0, 0, np.nan]])
