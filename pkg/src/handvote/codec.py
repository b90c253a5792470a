"""Dense per-pixel pose targets and vote recovery.

Per joint j and surface point p (pixel of the point map):

    S = max(0, 1 - |p - p_j| / theta)           3D heat map
    V = (p_j - p) / |p_j - p|  inside the ball  unit direction towards the joint
    R = max(0, 1 - |uv - proj(p_j)| / tau)      2D heat map on pixel centers

so that ``p + theta * (1 - S) * V`` reproduces ``p_j`` for every pixel in the ball.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import DepthFrame, GeometryError, PointMap, Pose, depth_to_pointmap, pixel_grid, project

DEFAULT_THETA = 80.0
DEFAULT_TAU = 12.0


@dataclass
class DenseTargets:
    R: np.ndarray  # (J, H, W)
    S: np.ndarray  # (J, H, W)
    V: np.ndarray  # (J, H, W, 3)
    theta: float
    tau: float
    joint_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.theta <= 0 or self.tau <= 0:
            raise ValueError(f"theta and tau must be positive, got {self.theta}, {self.tau}")
        if self.R.shape != self.S.shape or self.V.shape != self.S.shape + (3,):
            raise ValueError(f"inconsistent target shapes R{self.R.shape} S{self.S.shape} V{self.V.shape}")

    @property
    def num_joints(self) -> int:
        return self.S.shape[0]


@dataclass
class OffsetField:
    """Raw 3D offsets to each joint, masked to the theta-ball (no re-parameterization)."""

    offsets: np.ndarray  # (J, H, W, 3)
    mask: np.ndarray  # (J, H, W) bool


def _check_theta(theta):
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")


def _joint_offsets(pm: PointMap, pose: Pose):
    """(J, H, W, 3) offsets p_j - p and their norms."""
    diff = pose.joints[:, None, None, :] - pm.points[None]
    return diff, np.linalg.norm(diff, axis=-1)


def encode_heatmap3d(pm: PointMap, pose: Pose, theta: float) -> np.ndarray:
    _check_theta(theta)
    _, dist = _joint_offsets(pm, pose)
    S = np.maximum(0.0, 1.0 - dist / theta)
    S[:, ~pm.valid] = 0.0
    return S


def encode_vectorfield(pm: PointMap, pose: Pose, theta: float) -> np.ndarray:
    _check_theta(theta)
    diff, dist = _joint_offsets(pm, pose)
    inside = (dist < theta) & (dist > 0) & pm.valid[None]
    V = np.zeros_like(diff)
    V[inside] = diff[inside] / dist[inside][:, None]
    return V


def encode_heatmap2d(frame: DepthFrame, pose: Pose, tau: float) -> np.ndarray:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    cam = frame.intrinsics
    uv = project(pose.joints, cam)  # raises for joints behind the camera
    u, v = pixel_grid(*frame.shape)
    d2 = np.hypot(u[None] - uv[:, 0, None, None], v[None] - uv[:, 1, None, None])
    return np.maximum(0.0, 1.0 - d2 / tau)


def encode_targets(frame: DepthFrame, pose: Pose, theta: float = DEFAULT_THETA,
                   tau: float = DEFAULT_TAU, pm: PointMap | None = None) -> DenseTargets:
    if pm is None:
        pm = depth_to_pointmap(frame)
    return DenseTargets(
        R=encode_heatmap2d(frame, pose, tau),
        S=encode_heatmap3d(pm, pose, theta),
        V=encode_vectorfield(pm, pose, theta),
        theta=theta,
        tau=tau,
        joint_names=list(pose.joint_names),
    )


def encode_offsets_masked(pm: PointMap, pose: Pose, theta: float) -> OffsetField:
    _check_theta(theta)
    diff, dist = _joint_offsets(pm, pose)
    mask = (dist < theta) & pm.valid[None]
    offsets = np.where(mask[..., None], diff, 0.0)
    return OffsetField(offsets, mask)


def recover_candidates(pm: PointMap, S: np.ndarray, V: np.ndarray, theta: float):
    """Cast one vote per pixel: ``D + theta * (1 - S) * V``.

    Works on a single joint (H, W) / (H, W, 3) or stacked joints (J, H, W) / (J, H, W, 3).
    Returns (candidates, valid); a vote is valid where the pixel is valid and S > 0.
    """
    S = np.asarray(S, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if S.shape[-2:] != pm.shape or V.shape[:-1] != S.shape:
        raise GeometryError(f"grid mismatch: S{S.shape}, V{V.shape}, point map {pm.shape}")
    cand = pm.points + theta * (1.0 - S)[..., None] * V
    valid = pm.valid & (S > 0)
    return cand, valid
