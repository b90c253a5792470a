"""Pinhole camera model, depth map <-> point map conversion and cropping.

Convention: right-handed camera frame, +z into the scene, pixel (0, 0) at
the top-left, pixel centers at integer coordinates. Depth is in millimeters
and 0 marks an invalid pixel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised for degenerate geometric input (e.g. a point behind the camera)."""


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise GeometryError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": int(self.width),
            "height": int(self.height),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


@dataclass
class DepthFrame:
    """H x W depth grid (mm) with its validity mask and camera."""

    depth: np.ndarray
    valid: np.ndarray
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.depth.shape != self.intrinsics.shape or self.valid.shape != self.intrinsics.shape:
            raise GeometryError(
                f"grid shape {self.depth.shape} / mask {self.valid.shape} does not match "
                f"camera {self.intrinsics.shape}"
            )
        if np.any(self.valid & ~(self.depth > 0)):
            raise GeometryError("valid pixels must have positive depth")
        if np.any(self.depth[~self.valid] != 0):
            raise GeometryError("invalid pixels must store depth 0")

    @classmethod
    def from_depth(cls, depth: np.ndarray, intrinsics: CameraIntrinsics) -> "DepthFrame":
        """Build a frame treating non-positive or non-finite depth as invalid."""
        depth = np.asarray(depth, dtype=np.float64)
        valid = np.isfinite(depth) & (depth > 0)
        return cls(np.where(valid, depth, 0.0), valid, intrinsics)

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


@dataclass
class PointMap:
    points: np.ndarray  # (H, W, 3)
    valid: np.ndarray  # (H, W)

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


@dataclass
class Pose:
    joints: np.ndarray  # (J, 3)
    joint_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64).reshape(-1, 3)
        if len(self.joints) < 1:
            raise GeometryError("a pose needs at least one joint")
        if not np.all(np.isfinite(self.joints)):
            raise GeometryError("pose coordinates must be finite")
        if not self.joint_names:
            self.joint_names = [f"joint{j}" for j in range(len(self.joints))]
        if len(self.joint_names) != len(self.joints):
            raise GeometryError(
                f"{len(self.joint_names)} names for {len(self.joints)} joints"
            )

    @property
    def num_joints(self) -> int:
        return len(self.joints)


def project(point, cam: CameraIntrinsics) -> np.ndarray:
    """Project camera-space point(s) (..., 3) to continuous pixel coordinates (..., 2)."""
    p = np.asarray(point, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise GeometryError("point behind camera (z <= 0)")
    u = cam.fx * p[..., 0] / z + cam.cx
    v = cam.fy * p[..., 1] / z + cam.cy
    return np.stack([u, v], axis=-1)


def unproject(u, v, depth, cam: CameraIntrinsics) -> np.ndarray:
    """Inverse of :func:`project` for a known depth; broadcasts over arrays."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    if np.any(d <= 0):
        raise GeometryError("depth must be positive")
    x = (u - cam.cx) * d / cam.fx
    y = (v - cam.cy) * d / cam.fy
    return np.stack(np.broadcast_arrays(x, y, d), axis=-1)


def pixel_grid(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (u, v) pixel-center coordinate grids of shape (H, W)."""
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    return u, v


def depth_to_pointmap(frame: DepthFrame) -> PointMap:
    cam = frame.intrinsics
    u, v = pixel_grid(*frame.shape)
    points = np.zeros(frame.shape + (3,))
    m = frame.valid
    d = frame.depth[m]
    points[m, 0] = (u[m] - cam.cx) * d / cam.fx
    points[m, 1] = (v[m] - cam.cy) * d / cam.fy
    points[m, 2] = d
    return PointMap(points, m.copy())


def crop_intrinsics(cam: CameraIntrinsics, center, side: float, out_size: int) -> CameraIntrinsics:
    """Intrinsics after cropping a side x side window at `center` and resizing to out_size."""
    cu, cv = float(center[0]), float(center[1])
    k = out_size / side
    half = (out_size - 1) / 2.0
    return CameraIntrinsics(
        fx=cam.fx * k,
        fy=cam.fy * k,
        cx=k * (cam.cx - cu) + half,
        cy=k * (cam.cy - cv) + half,
        width=out_size,
        height=out_size,
    )


def crop_resize(frame: DepthFrame, center, side: float, out_size: int) -> DepthFrame:
    """Crop a square window and resample it to out_size x out_size (nearest neighbor).

    Output pixel i maps back to source coordinate ``center + (i - (out_size-1)/2) * side/out_size``,
    which is also how the returned intrinsics are built, so unprojected points of
    corresponding pixels agree up to the nearest-neighbor snap.
    """
    if side <= 0 or out_size <= 0:
        raise GeometryError(f"side and out_size must be positive, got {side}, {out_size}")
    h, w = frame.shape
    cu, cv = float(center[0]), float(center[1])
    if cu + side / 2 < -0.5 or cu - side / 2 > w - 0.5 or cv + side / 2 < -0.5 or cv - side / 2 > h - 0.5:
        raise GeometryError("crop window lies fully outside the image")
    scale = side / out_size
    half = (out_size - 1) / 2.0
    idx = np.arange(out_size, dtype=np.float64)
    src_u = np.rint(cu + (idx - half) * scale).astype(np.int64)
    src_v = np.rint(cv + (idx - half) * scale).astype(np.int64)
    inside_u = (src_u >= 0) & (src_u < w)
    inside_v = (src_v >= 0) & (src_v < h)
    depth = np.zeros((out_size, out_size))
    valid = np.zeros((out_size, out_size), dtype=bool)
    rows = np.clip(src_v, 0, h - 1)
    cols = np.clip(src_u, 0, w - 1)
    inside = inside_v[:, None] & inside_u[None, :]
    depth[:] = frame.depth[rows[:, None], cols[None, :]]
    valid[:] = frame.valid[rows[:, None], cols[None, :]] & inside
    depth[~valid] = 0.0
    cam = crop_intrinsics(frame.intrinsics, (cu, cv), side, out_size)
    return DepthFrame(depth, valid, cam)
