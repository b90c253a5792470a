"""Training loop, finite-difference gradient check and model files."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import io
from ..codec import DEFAULT_TAU, DEFAULT_THETA, DenseTargets, encode_targets
from ..geometry import DepthFrame, Pose
from .adam import OptimState, adam_step
from .augment import augment as random_augment
from .losses import loss, loss_and_grad, forward
from .predictor import Architecture, Predictor, prepare_input

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "loss", "loss_R", "loss_S", "loss_V")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.001
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    batch: int = 8
    steps: int = 200
    seed: int = 0
    stacks: int = 2
    channels: int = 16
    levels: int = 3
    augment: bool = True
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    theta: float = DEFAULT_THETA
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        self.loss_weights = tuple(float(w) for w in self.loss_weights)
        if self.batch < 1 or self.steps < 0:
            raise ValueError("batch must be >= 1 and steps >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


@dataclass
class TrainResult:
    params: np.ndarray
    predictor: Predictor
    log: list[dict] = field(default_factory=list)
    initial_params: np.ndarray | None = None


def load_training_samples(manifest_path) -> list[tuple[DepthFrame, Pose]]:
    manifest_path = Path(manifest_path)
    try:
        manifest = io.read_json(manifest_path)
        root = manifest_path.parent
        from ..geometry import CameraIntrinsics

        cam = CameraIntrinsics.from_dict(manifest["camera"])
        return [(io.read_depth(root / r["frame"], cam), io.read_pose(root / r["pose"]))
                for r in manifest["samples"]]
    except KeyError as e:
        raise io.FormatError(manifest_path, 0, f"manifest lacks key {e}") from None


def _encode(frame, pose, cfg):
    t = encode_targets(frame, pose, cfg.theta, cfg.tau)
    return prepare_input(frame), t.R, t.S, t.V


def train(samples, cfg: TrainConfig) -> TrainResult:
    """Mini-batch Adam on the stacked L2 loss.

    ``samples`` is a manifest path or a list of (frame, pose). Batches are drawn
    from per-epoch permutations of a generator seeded with ``cfg.seed``; with the
    same seed, config and data the log and parameters are reproduced exactly.
    """
    if not isinstance(samples, list):
        samples = load_training_samples(samples)
    if not samples:
        raise TrainingError("empty training set")
    size = samples[0][0].shape[0]
    arch = Architecture(size=size, joints=samples[0][1].num_joints, channels=cfg.channels,
                        stacks=cfg.stacks, levels=cfg.levels)
    predictor = Predictor(arch)
    rng = np.random.default_rng(cfg.seed)
    params = predictor.init_params(rng)
    initial = params.copy()
    state = OptimState.fresh(params.size, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    fixed = None if cfg.augment else [_encode(f, p, cfg) for f, p in samples]
    order = np.empty(0, dtype=np.int64)
    history = []
    for step in range(1, cfg.steps + 1):
        if len(order) < cfg.batch:
            order = np.concatenate([order, rng.permutation(len(samples))])
        idx, order = order[:cfg.batch], order[cfg.batch:]
        if fixed is not None:
            batch = [fixed[i] for i in idx]
        else:
            batch = [_encode(*random_augment(*samples[i], rng), cfg) for i in idx]
        x, R, S, V = (np.stack(a) for a in zip(*batch))
        lb, grad = loss_and_grad(predictor, params, x, R, S, V, cfg.loss_weights, scale=1.0 / len(idx))
        if not np.isfinite(lb.total):
            raise TrainingError(f"non-finite loss at step {step}")
        params, state = adam_step(params, grad, state)
        terms = lb.per_term
        history.append({"step": step, "loss": lb.total, "loss_R": terms["R"],
                        "loss_S": terms["S"], "loss_V": terms["V"]})
        if step % 50 == 0 or step == 1:
            log.info("step %d loss %.4f", step, lb.total)
    return TrainResult(params, predictor, history, initial)


def write_log(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for rec in history:
            w.writerow([rec["step"]] + [repr(float(rec[k])) for k in LOG_FIELDS[1:]])


# -- gradient check -------------------------------------------------------------------

def sample_loss(predictor: Predictor, params: np.ndarray, frame: DepthFrame, gt: DenseTargets) -> float:
    return loss(forward(predictor, params, frame), gt).total


def gradient_check(predictor: Predictor, params: np.ndarray, frame: DepthFrame, gt: DenseTargets,
                   h: float = 1e-5, n_coords: int = 200, rng: np.random.Generator | None = None,
                   analytic: np.ndarray | None = None) -> float:
    """Max relative error between backprop and central differences over sampled coordinates."""
    from .losses import backward

    rng = np.random.default_rng(0) if rng is None else rng
    g = backward(predictor, params, frame, gt) if analytic is None else analytic
    n = params.size
    coords = rng.choice(n, size=min(n_coords, n), replace=False)
    worst = 0.0
    p = params.copy()
    for i in coords:
        orig = p[i]
        p[i] = orig + h
        up = sample_loss(predictor, p, frame, gt)
        p[i] = orig - h
        down = sample_loss(predictor, p, frame, gt)
        p[i] = orig
        fd = (up - down) / (2 * h)
        err = abs(fd - g[i]) / max(abs(fd), abs(g[i]), 1e-12)
        worst = max(worst, err)
    return worst


# -- model files ------------------------------------------------------------------------

def save_model(path, arch: Architecture, params: np.ndarray, extra: dict | None = None) -> None:
    """JSON descriptor at ``path`` plus a little-endian float32 blob next to it."""
    path = Path(path)
    blob = path.with_suffix(".bin")
    blob.write_bytes(np.asarray(params, dtype="<f4").tobytes())
    desc = {"architecture": arch.to_dict(), "param_count": int(params.size), "blob": blob.name}
    if extra:
        desc.update(extra)
    io.write_json(path, desc)


def load_model(path) -> tuple[Predictor, np.ndarray, dict]:
    path = Path(path)
    desc = io.read_json(path)
    try:
        arch = Architecture.from_dict(desc["architecture"])
        blob = path.parent / desc["blob"]
        count = int(desc["param_count"])
    except (KeyError, TypeError) as e:
        raise io.FormatError(path, 0, f"bad model descriptor: {e}") from None
    predictor = Predictor(arch)
    if count != predictor.size:
        raise io.FormatError(path, 0, f"param_count {count} != architecture size {predictor.size}")
    data = blob.read_bytes()
    if len(data) != 4 * count:
        raise io.FormatError(blob, len(data), f"expected {4 * count} bytes of float32 parameters")
    params = np.frombuffer(data, dtype="<f4").astype(np.float64)
    return predictor, params, desc


def config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["loss_weights"] = list(cfg.loss_weights)
    return json.loads(json.dumps(d))
