"""Synthetic articulated capsule hand: kinematics, depth rendering, corruption, datasets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .codec import DEFAULT_TAU, DEFAULT_THETA, DenseTargets, encode_targets
from .geometry import CameraIntrinsics, DepthFrame, GeometryError, Pose

log = logging.getLogger(__name__)


@dataclass
class HandModel:
    """Kinematic tree of capsule segments.

    Joint j hangs off ``parents[j]`` (-1 for the single root) at ``offsets[j]`` in the
    parent frame, after rotating by Rz(abduction) @ Rx(flexion). The capsule of joint j
    spans parent position -> joint position (a sphere for the root).
    """

    names: list[str]
    parents: list[int]
    offsets: np.ndarray  # (J, 3) mm
    radii: np.ndarray  # (J,) mm
    flex_limits: np.ndarray  # (J, 2) rad
    abduct_limits: np.ndarray  # (J, 2) rad
    root_rot_limits: np.ndarray = field(default_factory=lambda: np.zeros((3, 2)))  # xyz euler, rad
    root_trans_limits: np.ndarray = field(default_factory=lambda: np.array([[0.0, 0.0], [0.0, 0.0], [500.0, 500.0]]))

    def __post_init__(self):
        J = len(self.names)
        self.offsets = np.asarray(self.offsets, dtype=np.float64).reshape(J, 3)
        self.radii = np.asarray(self.radii, dtype=np.float64).reshape(J)
        self.flex_limits = np.asarray(self.flex_limits, dtype=np.float64).reshape(J, 2)
        self.abduct_limits = np.asarray(self.abduct_limits, dtype=np.float64).reshape(J, 2)
        self.root_rot_limits = np.asarray(self.root_rot_limits, dtype=np.float64).reshape(3, 2)
        self.root_trans_limits = np.asarray(self.root_trans_limits, dtype=np.float64).reshape(3, 2)
        if len(self.parents) != J:
            raise ValueError("parents and names differ in length")
        if J and sum(p < 0 for p in self.parents) != 1:
            raise ValueError("a hand model needs exactly one root")
        for j, p in enumerate(self.parents):
            # parents precede children, which also rules out cycles
            if p >= j:
                raise ValueError(f"joint {j} has parent {p}; parents must precede children")
        if np.any(self.radii <= 0):
            raise ValueError("capsule radii must be positive")
        for lim in (self.flex_limits, self.abduct_limits, self.root_rot_limits, self.root_trans_limits):
            if np.any(lim[:, 0] > lim[:, 1]):
                raise ValueError("limits must satisfy lo <= hi")

    @property
    def num_joints(self) -> int:
        return len(self.names)

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "parents": list(self.parents),
            "offsets": self.offsets.tolist(),
            "radii": self.radii.tolist(),
            "flex_limits": self.flex_limits.tolist(),
            "abduct_limits": self.abduct_limits.tolist(),
            "root_rot_limits": self.root_rot_limits.tolist(),
            "root_trans_limits": self.root_trans_limits.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HandModel":
        return cls(**d)


@dataclass
class PoseAngles:
    flex: np.ndarray  # (J,)
    abduct: np.ndarray  # (J,)
    root_rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    root_translation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 500.0]))

    @classmethod
    def zeros(cls, model: HandModel, translation=(0.0, 0.0, 500.0)) -> "PoseAngles":
        J = model.num_joints
        return cls(np.zeros(J), np.zeros(J), np.zeros(3), np.asarray(translation, dtype=np.float64))


@dataclass(frozen=True)
class NoiseConfig:
    depth_noise_std: float = 0.0
    hole_prob: float = 0.0
    target_noise_std_S: float = 0.0
    target_noise_std_V: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.depth_noise_std, self.target_noise_std_S, self.target_noise_std_V) < 0:
            raise ValueError("noise standard deviations must be >= 0")
        if not 0 <= self.hole_prob <= 1:
            raise ValueError(f"hole_prob must be in [0, 1], got {self.hole_prob}")


# -- models --------------------------------------------------------------------

# finger: (name, knuckle offset from palm center, direction of the finger, segment lengths, radius)
_FINGERS = [
    ("thumb", (-38.0, 5.0, -4.0), -0.9, (34.0, 30.0), 8.5),
    ("index", (-24.0, -42.0, 0.0), -0.12, (38.0, 28.0), 7.5),
    ("middle", (-6.0, -46.0, 0.0), 0.0, (42.0, 32.0), 7.5),
    ("ring", (12.0, -42.0, 0.0), 0.1, (38.0, 30.0), 7.0),
    ("pinky", (28.0, -34.0, 0.0), 0.22, (30.0, 24.0), 6.5),
]

_ROOT_ROT = [[-0.35, 0.35], [-0.35, 0.35], [-0.6, 0.6]]


def _trans_limits(z_range, xy_range, y_center):
    return np.array([[-xy_range, xy_range], [y_center - xy_range, y_center + xy_range], list(z_range)])


def default_hand(z_range=(440.0, 540.0), xy_range=15.0) -> HandModel:
    """Five-finger hand, 16 joints: palm center root + knuckle, middle and tip per finger."""
    names, parents, offsets, radii, flex, abd = ["palm"], [-1], [(0, 0, 0)], [14.0], [(0, 0)], [(0, 0)]
    for fname, knuckle, angle, (l1, l2), r in _FINGERS:
        d = np.array([np.sin(angle), -np.cos(angle), 0.0])
        base = len(names)
        names += [f"{fname}_mcp", f"{fname}_pip", f"{fname}_tip"]
        parents += [0, base, base + 1]
        offsets += [knuckle, tuple(d * l1), tuple(d * l2)]
        radii += [10.0, r, r - 0.5]
        flex += [(0, 0), (-0.2, 1.2), (0.0, 1.3)]
        abd += [(0, 0), (-0.25, 0.25), (0, 0)]
    return HandModel(
        names, parents, np.array(offsets, dtype=float), np.array(radii), np.array(flex), np.array(abd),
        root_rot_limits=np.array(_ROOT_ROT),
        root_trans_limits=_trans_limits(z_range, xy_range, 55.0),
    )


def small_hand(z_range=(440.0, 540.0), xy_range=15.0) -> HandModel:
    """Five-joint hand: palm root plus four single-segment fingers."""
    names, parents, offsets, radii, flex, abd = ["palm"], [-1], [(0, 0, 0)], [16.0], [(0, 0)], [(0, 0)]
    for fname, knuckle, angle, (l1, l2), r in _FINGERS[:4]:
        d = np.array([np.sin(angle), -np.cos(angle), 0.0])
        names.append(f"{fname}_tip")
        parents.append(0)
        offsets.append(tuple(np.array(knuckle) + d * (l1 + l2)))
        radii.append(r + 1.0)
        flex.append((-0.2, 0.9))
        abd.append((-0.2, 0.2))
    return HandModel(
        names, parents, np.array(offsets, dtype=float), np.array(radii), np.array(flex), np.array(abd),
        root_rot_limits=np.array(_ROOT_ROT),
        root_trans_limits=_trans_limits(z_range, xy_range, 45.0),
    )


MODELS = {"hand16": default_hand, "hand5": small_hand}


def default_camera(size: int = 128) -> CameraIntrinsics:
    """Square camera framing the default hands at ~500 mm (fx ~ 2.1 px per pixel of width)."""
    f = 2.1 * size
    c = (size - 1) / 2.0
    return CameraIntrinsics(f, f, c, c, size, size)


def make_model(name: str) -> HandModel:
    try:
        return MODELS[name]()
    except KeyError:
        raise ValueError(f"unknown hand model {name!r}; choose from {sorted(MODELS)}") from None


# -- kinematics -------------------------------------------------------------------

def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _check_limits(name, values, limits):
    values = np.asarray(values, dtype=np.float64)
    bad = (values < limits[:, 0]) | (values > limits[:, 1])
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise GeometryError(f"{name}[{i}] = {values[i]:.4f} outside [{limits[i, 0]:.4f}, {limits[i, 1]:.4f}]")


def forward_kinematics(model: HandModel, angles: PoseAngles, check_limits: bool = True) -> Pose:
    if check_limits:
        _check_limits("flex", angles.flex, model.flex_limits)
        _check_limits("abduct", angles.abduct, model.abduct_limits)
        _check_limits("root_rotation", angles.root_rotation, model.root_rot_limits)
        _check_limits("root_translation", angles.root_translation, model.root_trans_limits)
    J = model.num_joints
    rots = np.zeros((J, 3, 3))
    pos = np.zeros((J, 3))
    rx, ry, rz = angles.root_rotation
    root_rot = rot_z(rz) @ rot_y(ry) @ rot_x(rx)
    for j, p in enumerate(model.parents):
        local = rot_z(angles.abduct[j]) @ rot_x(angles.flex[j])
        if p < 0:
            rots[j] = root_rot @ local
            pos[j] = np.asarray(angles.root_translation, dtype=np.float64) + rots[j] @ model.offsets[j]
        else:
            rots[j] = rots[p] @ local
            pos[j] = pos[p] + rots[j] @ model.offsets[j]
    return Pose(pos, list(model.names))


def sample_pose(model: HandModel, rng: np.random.Generator) -> PoseAngles:
    def uniform(lim):
        return rng.uniform(lim[:, 0], lim[:, 1])

    return PoseAngles(
        flex=uniform(model.flex_limits),
        abduct=uniform(model.abduct_limits),
        root_rotation=uniform(model.root_rot_limits),
        root_translation=uniform(model.root_trans_limits),
    )


# -- rendering ---------------------------------------------------------------------

def capsules(model: HandModel, pose: Pose) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """(start, end, radius) per joint segment; the root segment is a sphere."""
    out = []
    for j, p in enumerate(model.parents):
        a = pose.joints[p] if p >= 0 else pose.joints[j]
        out.append((a, pose.joints[j], float(model.radii[j])))
    return out


def ray_capsule(rd: np.ndarray, a: np.ndarray, b: np.ndarray, r: float) -> np.ndarray:
    """Nearest positive hit distance of unit rays from the origin with a capsule; inf on miss."""
    ro_a = -a
    ba = b - a
    baba = ba @ ba
    t = np.full(rd.shape[0], np.inf)
    bard = rd @ ba
    rdoa = rd @ ro_a
    baoa = ba @ ro_a
    oaoa = ro_a @ ro_a
    if baba > 0:
        A = baba - bard * bard
        B = baba * rdoa - baoa * bard
        C = baba * oaoa - baoa * baoa - r * r * baba
        h = B * B - A * C
        ok = (h >= 0) & (A > 1e-12 * baba)
        with np.errstate(invalid="ignore", divide="ignore"):
            tc = np.where(ok, (-B - np.sqrt(np.maximum(h, 0))) / np.where(ok, A, 1.0), np.inf)
        y = baoa + tc * bard
        body = ok & (y > 0) & (y < baba) & (tc > 0)
        t[body] = tc[body]
    # end caps: a sphere at each end covers everything the cylinder body does not
    for c in (a, b) if baba > 0 else (a,):
        oc = -c
        Bc = rd @ oc
        Cc = oc @ oc - r * r
        h = Bc * Bc - Cc
        hit = h >= 0
        tc = np.where(hit, -Bc - np.sqrt(np.maximum(h, 0)), np.inf)
        tc[tc <= 0] = np.inf
        t = np.minimum(t, tc)
    return t


def render_pose(model: HandModel, pose: Pose, cam: CameraIntrinsics) -> DepthFrame:
    """Ray-cast each pixel center against every capsule and keep the nearest hit."""
    from .geometry import pixel_grid

    u, v = pixel_grid(cam.height, cam.width)
    rd = np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones_like(u)], axis=-1).reshape(-1, 3)
    norm = np.linalg.norm(rd, axis=1)
    rd = rd / norm[:, None]
    t = np.full(rd.shape[0], np.inf)
    for a, b, r in capsules(model, pose):
        t = np.minimum(t, ray_capsule(rd, a, b, r))
    hit = np.isfinite(t)
    depth = np.where(hit, t * rd[:, 2], 0.0).reshape(cam.shape)
    return DepthFrame(depth, hit.reshape(cam.shape), cam)


def render_depth(model: HandModel, angles: PoseAngles, cam: CameraIntrinsics) -> DepthFrame:
    if model.num_joints == 0:
        return DepthFrame(np.zeros(cam.shape), np.zeros(cam.shape, dtype=bool), cam)
    return render_pose(model, forward_kinematics(model, angles), cam)


def segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ba = b - a
    denom = ba @ ba
    if denom == 0:
        return np.linalg.norm(points - a, axis=-1)
    s = np.clip((points - a) @ ba / denom, 0.0, 1.0)
    return np.linalg.norm(points - (a + s[..., None] * ba), axis=-1)


def signed_distance(model: HandModel, pose: Pose, points: np.ndarray) -> np.ndarray:
    """Signed distance of points to the union of capsules (negative inside)."""
    return np.min(
        [segment_distance(points, a, b) - r for a, b, r in capsules(model, pose)], axis=0
    )


# -- corruption ----------------------------------------------------------------------

def corrupt_frame(frame: DepthFrame, nc: NoiseConfig, rng: np.random.Generator | None = None) -> DepthFrame:
    rng = np.random.default_rng(nc.seed) if rng is None else rng
    depth = frame.depth.copy()
    valid = frame.valid.copy()
    if nc.depth_noise_std > 0:
        depth[valid] += rng.normal(0.0, nc.depth_noise_std, size=int(valid.sum()))
    if nc.hole_prob > 0:
        valid &= rng.random(depth.shape) >= nc.hole_prob
    valid &= depth > 0
    depth[~valid] = 0.0
    return DepthFrame(depth, valid, frame.intrinsics)


def corrupt_targets(t: DenseTargets, nc: NoiseConfig, rng: np.random.Generator | None = None) -> DenseTargets:
    rng = np.random.default_rng(nc.seed) if rng is None else rng
    S = t.S.copy()
    V = t.V.copy()
    if nc.target_noise_std_S > 0:
        S = np.clip(S + rng.normal(0.0, nc.target_noise_std_S, size=S.shape), 0.0, 1.0)
    if nc.target_noise_std_V > 0:
        nonzero = np.any(V != 0, axis=-1)
        noisy = V + rng.normal(0.0, nc.target_noise_std_V, size=V.shape)
        norm = np.linalg.norm(noisy, axis=-1, keepdims=True)
        V = np.where(nonzero[..., None] & (norm > 0), noisy / np.where(norm > 0, norm, 1.0), 0.0)
    return DenseTargets(t.R.copy(), S, V, t.theta, t.tau, list(t.joint_names))


# -- datasets ---------------------------------------------------------------------------

def frame_rng(seed: int, index: int) -> np.random.Generator:
    """Per-frame generator derived from (seed, index); independent of generation order."""
    return np.random.default_rng([int(seed), int(index)])


def synth_sample(model: HandModel, cam: CameraIntrinsics, rng: np.random.Generator,
                 noise: NoiseConfig | None = None) -> tuple[DepthFrame, Pose]:
    """One rendered frame with depth quantized to whole millimeters (the on-disk precision)."""
    angles = sample_pose(model, rng)
    pose = forward_kinematics(model, angles)
    frame = render_pose(model, pose, cam)
    if noise is not None and (noise.depth_noise_std > 0 or noise.hole_prob > 0):
        frame = corrupt_frame(frame, noise, rng)
    return DepthFrame.from_depth(np.rint(frame.depth), cam), pose


def generate_dataset(model: HandModel, n: int, seed: int, cam: CameraIntrinsics, out_dir,
                     theta: float = DEFAULT_THETA, tau: float = DEFAULT_TAU,
                     noise: NoiseConfig | None = None, model_name: str | None = None) -> dict:
    """Write n (frame, pose, targets) triples plus ``manifest.json`` into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = []
    for i in range(n):
        frame, pose = synth_sample(model, cam, frame_rng(seed, i), noise)
        targets = encode_targets(frame, pose, theta, tau)
        stem = f"{i:05d}"
        rec = {"frame": f"frame_{stem}.pgm", "pose": f"pose_{stem}.json", "targets": f"targets_{stem}.dvt"}
        try:
            io.write_depth(out / rec["frame"], frame)
            io.write_pose(out / rec["pose"], pose)
            io.write_targets(out / rec["targets"], targets)
        except OSError as e:
            raise OSError(f"writing sample {i} into {out}: {e}") from e
        samples.append(rec)
    manifest = {
        "model": model.to_dict(),
        "model_name": model_name,
        "camera": cam.to_dict(),
        "seed": int(seed),
        "count": int(n),
        "theta": float(theta),
        "tau": float(tau),
        "samples": samples,
    }
    io.write_json(out / "manifest.json", manifest)
    log.info("wrote %d samples to %s", n, out)
    return manifest


def load_dataset(manifest_path):
    """Yield (frame, pose, targets) triples listed in a manifest."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    manifest = io.read_json(manifest_path)
    cam = CameraIntrinsics.from_dict(manifest["camera"])
    for rec in manifest["samples"]:
        frame = io.read_depth(root / rec["frame"], cam)
        pose = io.read_pose(root / rec["pose"])
        targets = io.read_targets(root / rec["targets"])
        yield frame, pose, targets
