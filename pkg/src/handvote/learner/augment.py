"""In-plane rotation and aspect-ratio augmentation, applied to both pixels and pose."""

from __future__ import annotations

import numpy as np

from ..geometry import DepthFrame, Pose, pixel_grid

MAX_ROTATION = np.pi / 2
SCALE_RANGE = (0.85, 1.15)


def pixel_transform(angle: float, sx: float = 1.0, sy: float = 1.0) -> np.ndarray:
    """2x2 map applied to pixel offsets from the principal point: scale @ rotation."""
    c, s = np.cos(angle), np.sin(angle)
    return np.diag([sx, sy]) @ np.array([[c, -s], [s, c]])


def camera_transform(A: np.ndarray, fx: float, fy: float) -> np.ndarray:
    """The x/y map in camera space that induces pixel map A at every depth."""
    F = np.diag([fx, fy])
    return np.linalg.inv(F) @ A @ F


def transform_pose(pose: Pose, A: np.ndarray, fx: float, fy: float) -> Pose:
    M = camera_transform(A, fx, fy)
    joints = pose.joints.copy()
    joints[:, :2] = joints[:, :2] @ M.T
    return Pose(joints, list(pose.joint_names))


def transform_frame(frame: DepthFrame, A: np.ndarray) -> DepthFrame:
    """Resample depth under pixel map A (nearest neighbor, depth values unchanged)."""
    cam = frame.intrinsics
    h, w = frame.shape
    u, v = pixel_grid(h, w)
    off = np.stack([u - cam.cx, v - cam.cy], axis=-1) @ np.linalg.inv(A).T
    su = np.rint(off[..., 0] + cam.cx).astype(np.int64)
    sv = np.rint(off[..., 1] + cam.cy).astype(np.int64)
    inside = (su >= 0) & (su < w) & (sv >= 0) & (sv < h)
    su = np.clip(su, 0, w - 1)
    sv = np.clip(sv, 0, h - 1)
    valid = inside & frame.valid[sv, su]
    depth = np.where(valid, frame.depth[sv, su], 0.0)
    return DepthFrame(depth, valid, cam)


def apply_augmentation(frame: DepthFrame, pose: Pose, angle: float, sx: float = 1.0,
                       sy: float = 1.0) -> tuple[DepthFrame, Pose]:
    if angle == 0 and sx == 1 and sy == 1:
        return DepthFrame(frame.depth.copy(), frame.valid.copy(), frame.intrinsics), \
            Pose(pose.joints.copy(), list(pose.joint_names))
    A = pixel_transform(angle, sx, sy)
    cam = frame.intrinsics
    return transform_frame(frame, A), transform_pose(pose, A, cam.fx, cam.fy)


def augment(frame: DepthFrame, pose: Pose, rng: np.random.Generator,
            max_rotation: float = MAX_ROTATION, scale_range=SCALE_RANGE) -> tuple[DepthFrame, Pose]:
    """Random rotation about the principal point plus independent x/y scaling."""
    angle = rng.uniform(-max_rotation, max_rotation)
    sx, sy = rng.uniform(scale_range[0], scale_range[1], size=2)
    return apply_augmentation(frame, pose, angle, sx, sy)
