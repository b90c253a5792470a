"""File formats: 16-bit PGM depth frames, pose JSON, dense target blobs."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, DepthFrame, Pose


class FormatError(ValueError):
    """Malformed input file; message carries the path and byte offset."""

    def __init__(self, path, offset: int, msg: str):
        super().__init__(f"{path}: offset {offset}: {msg}")
        self.path = str(path)
        self.offset = offset


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(path, e.pos, f"invalid JSON: {e.msg}") from None


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_suffix(".json")


# -- depth frames -------------------------------------------------------------

def write_depth(path, frame: DepthFrame) -> None:
    """Write depth as binary P5 PGM (maxval 65535, big-endian) plus a camera sidecar.

    Depth is rounded to whole millimeters.
    """
    h, w = frame.shape
    d = np.rint(np.where(frame.valid, frame.depth, 0.0))
    if d.max(initial=0) > 65535:
        raise ValueError(f"{path}: depth exceeds 65535 mm")
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + d.astype(">u2").tobytes())
    write_json(sidecar_path(path), frame.intrinsics.to_dict())


def _pgm_tokens(data: bytes, path, count: int) -> tuple[list[bytes], int]:
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(path, start, "truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates header and raster
    return tokens, pos + 1


def read_depth(path, intrinsics: CameraIntrinsics | None = None) -> DepthFrame:
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise FormatError(path, 0, f"bad magic {data[:2]!r}, expected b'P5'")
    tokens, offset = _pgm_tokens(data, path, 4)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(path, 2, "non-integer PGM header field") from None
    if maxval != 65535:
        raise FormatError(path, offset - 1, f"maxval {maxval}, expected 65535")
    need = offset + 2 * w * h
    if len(data) < need:
        raise FormatError(path, len(data), f"raster truncated, expected {need} bytes")
    depth = np.frombuffer(data, dtype=">u2", count=w * h, offset=offset).reshape(h, w)
    if intrinsics is None:
        intrinsics = CameraIntrinsics.from_dict(read_json(sidecar_path(path)))
    if intrinsics.shape != (h, w):
        raise FormatError(path, 3, f"image {w}x{h} does not match camera sidecar")
    depth = depth.astype(np.float64)
    return DepthFrame(depth, depth > 0, intrinsics)


# -- poses ---------------------------------------------------------------------

def write_pose(path, pose: Pose, status: list[str] | None = None) -> None:
    obj = {
        "joint_names": list(pose.joint_names),
        "joints": [[float(c) for c in p] for p in pose.joints],
    }
    if status is not None:
        obj["status"] = list(status)
    write_json(path, obj)


def write_pose_estimate(path, joints: np.ndarray, names: list[str], status: list[str]) -> None:
    """Write an estimated pose; joints without evidence are stored as null."""
    rows = [None if s != "ok" else [float(c) for c in p] for p, s in zip(joints, status)]
    write_json(path, {"joint_names": list(names), "joints": rows, "status": list(status)})


def read_pose_record(path) -> tuple[np.ndarray, list[str], list[str]]:
    """Read a pose file; returns (joints with NaN for null rows, names, status)."""
    obj = read_json(path)
    if "joints" not in obj or "joint_names" not in obj:
        raise FormatError(path, 0, "pose file needs 'joints' and 'joint_names'")
    rows = obj["joints"]
    joints = np.array([[np.nan] * 3 if r is None else r for r in rows], dtype=np.float64).reshape(-1, 3)
    names = list(obj["joint_names"])
    status = list(obj.get("status", ["ok" if r is not None else "no_evidence" for r in rows]))
    if len(names) != len(joints) or len(status) != len(joints):
        raise FormatError(path, 0, "joints, joint_names and status lengths differ")
    return joints, names, status


def read_pose(path) -> Pose:
    joints, names, status = read_pose_record(path)
    if any(s != "ok" for s in status):
        raise FormatError(path, 0, "pose has joints without estimates")
    return Pose(joints, names)


# -- dense targets ---------------------------------------------------------------

DVT_MAGIC = b"DVT1"
DVT_VERSION = 1
_DVT_HEADER = struct.Struct("<4sIIIII")


def write_targets(path, targets) -> None:
    """Write R, S, V as float32 blobs behind a 24-byte header; theta/tau go to a sidecar."""
    J, H, W = targets.S.shape
    header = _DVT_HEADER.pack(DVT_MAGIC, DVT_VERSION, H, W, J, 0)
    body = b"".join(
        np.ascontiguousarray(a, dtype="<f4").tobytes()
        for a in (targets.R, targets.S, targets.V)
    )
    Path(path).write_bytes(header + body)
    write_json(
        sidecar_path(path),
        {"theta": float(targets.theta), "tau": float(targets.tau), "joint_names": list(targets.joint_names)},
    )


def read_targets(path):
    from .codec import DenseTargets

    data = Path(path).read_bytes()
    if len(data) < _DVT_HEADER.size:
        raise FormatError(path, len(data), "file shorter than 24-byte header")
    magic, version, H, W, J, _flags = _DVT_HEADER.unpack_from(data, 0)
    if magic != DVT_MAGIC:
        raise FormatError(path, 0, f"bad magic {magic!r}, expected {DVT_MAGIC!r}")
    if version != DVT_VERSION:
        raise FormatError(path, 4, f"unsupported version {version}")
    n = J * H * W
    need = _DVT_HEADER.size + 4 * 5 * n
    if len(data) != need:
        raise FormatError(path, len(data), f"expected {need} bytes for J={J}, H={H}, W={W}")
    off = _DVT_HEADER.size
    R = np.frombuffer(data, "<f4", n, off).reshape(J, H, W)
    S = np.frombuffer(data, "<f4", n, off + 4 * n).reshape(J, H, W)
    V = np.frombuffer(data, "<f4", 3 * n, off + 8 * n).reshape(J, H, W, 3)
    meta = read_json(sidecar_path(path))
    return DenseTargets(
        R=R.astype(np.float64),
        S=S.astype(np.float64),
        V=V.astype(np.float64),
        theta=float(meta["theta"]),
        tau=float(meta["tau"]),
        joint_names=list(meta.get("joint_names", [])),
    )
