"""Vote aggregation: top-K candidate selection, 2D-consensus weights and mean shift."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import DEFAULT_TAU, DEFAULT_THETA, DenseTargets, recover_candidates
from .geometry import CameraIntrinsics, PointMap

WEIGHTINGS = ("weighted", "unweighted", "uniform")


class NoEvidenceError(RuntimeError):
    """No usable vote for a joint."""


@dataclass(frozen=True)
class AggregatorConfig:
    theta: float = DEFAULT_THETA
    tau: float = DEFAULT_TAU
    k_candidates: int = 5
    sigma: float = 40.0
    max_iters: int = 30
    stop_eps: float = 1e-3
    weighting: str = "weighted"

    def __post_init__(self):
        if self.k_candidates < 1:
            raise ValueError(f"k_candidates must be >= 1, got {self.k_candidates}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.stop_eps > 0:
            raise ValueError(f"stop_eps must be positive, got {self.stop_eps}")
        if self.theta <= 0 or self.tau <= 0:
            raise ValueError("theta and tau must be positive")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")


@dataclass
class CandidateSet:
    points: np.ndarray  # (n, 3)
    weights: np.ndarray  # (n,)
    source_pixels: np.ndarray  # (n, 2) as (row, col)

    def __len__(self):
        return len(self.points)


@dataclass
class PoseEstimate:
    joints: np.ndarray  # (J, 3), NaN where no evidence
    status: list[str]
    joint_names: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(s == "ok" for s in self.status)


def select_candidates(S: np.ndarray, candidates: np.ndarray, valid: np.ndarray, k: int) -> CandidateSet:
    """Keep the k valid votes with the largest S; ties resolve in row-major order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    flat = np.flatnonzero(valid)
    if flat.size == 0:
        raise NoEvidenceError("no valid candidates")
    order = np.argsort(-S.ravel()[flat], kind="stable")[:k]
    idx = flat[order]
    rows, cols = np.unravel_index(idx, S.shape)
    return CandidateSet(
        points=candidates.reshape(-1, 3)[idx].copy(),
        weights=np.ones(len(idx)),
        source_pixels=np.stack([rows, cols], axis=1),
    )


def bilinear_sample(grid: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample grid at continuous (u, v) = (col, row); 0 outside [0, W-1] x [0, H-1]."""
    h, w = grid.shape
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    inside = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    uc = np.clip(u, 0, w - 1)
    vc = np.clip(v, 0, h - 1)
    u0 = np.minimum(np.floor(uc).astype(np.int64), max(w - 2, 0))
    v0 = np.minimum(np.floor(vc).astype(np.int64), max(h - 2, 0))
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    a = uc - u0
    b = vc - v0
    val = ((1 - a) * (1 - b) * grid[v0, u0] + a * (1 - b) * grid[v0, u1]
           + (1 - a) * b * grid[v1, u0] + a * b * grid[v1, u1])
    return np.where(inside, val, 0.0)


def weights_weighted(cs: CandidateSet, R: np.ndarray, cam: CameraIntrinsics) -> CandidateSet:
    """Weight each vote by the 2D heat map at the vote's own projection."""
    z = cs.points[:, 2]
    keep = z > 0
    pts = cs.points[keep]
    if len(pts) == 0:
        raise NoEvidenceError("all candidates behind the camera")
    u = cam.fx * pts[:, 0] / pts[:, 2] + cam.cx
    v = cam.fy * pts[:, 1] / pts[:, 2] + cam.cy
    w = bilinear_sample(R, u, v)
    if not np.any(w > 0):
        w = np.ones(len(pts))
    return CandidateSet(pts, w, cs.source_pixels[keep])


def weights_unweighted(cs: CandidateSet, R: np.ndarray, S: np.ndarray) -> CandidateSet:
    """Projection-free weights (1 + R) * S read at each vote's source pixel."""
    r, c = cs.source_pixels[:, 0], cs.source_pixels[:, 1]
    w = (1.0 + R[r, c]) * S[r, c]
    return CandidateSet(cs.points, w, cs.source_pixels)


def _shift(points, weights, p, sigma):
    d2 = np.sum((points - p) ** 2, axis=1)
    # shifting the exponent by min(d2) leaves the ratio unchanged and avoids underflow
    k = np.exp(-(d2 - d2.min()) / (2.0 * sigma * sigma)) * weights
    return k @ points / k.sum()


def mean_shift(cs: CandidateSet, sigma: float, max_iters: int = 30, stop_eps: float = 1e-3,
               return_path: bool = False):
    """Gaussian-kernel mean shift started from the weighted mean of the candidates."""
    w = np.asarray(cs.weights, dtype=np.float64)
    keep = w > 0
    if len(cs) == 0 or not np.any(keep):
        raise NoEvidenceError("no candidate with positive weight")
    pts = cs.points[keep]
    w = w[keep]
    p = w @ pts / w.sum()
    path = [p]
    for _ in range(max_iters):
        nxt = _shift(pts, w, p, sigma)
        step = np.linalg.norm(nxt - p)
        p = nxt
        path.append(p)
        if step < stop_eps:
            break
    if return_path:
        return p, np.array(path)
    return p


def estimate_joint(pm: PointMap, R: np.ndarray, S: np.ndarray, V: np.ndarray,
                   cfg: AggregatorConfig, cam: CameraIntrinsics | None = None) -> np.ndarray:
    cand, valid = recover_candidates(pm, S, V, cfg.theta)
    cs = select_candidates(S, cand, valid, cfg.k_candidates)
    if cfg.weighting == "weighted":
        if cam is None:
            raise ValueError("weighted aggregation needs camera intrinsics")
        cs = weights_weighted(cs, R, cam)
    elif cfg.weighting == "unweighted":
        cs = weights_unweighted(cs, R, S)
    return mean_shift(cs, cfg.sigma, cfg.max_iters, cfg.stop_eps)


def estimate_pose(pm: PointMap, targets: DenseTargets, cfg: AggregatorConfig,
                  cam: CameraIntrinsics | None = None) -> PoseEstimate:
    """Run the per-joint estimator on every joint; failures are flagged, never filled in."""
    J = targets.num_joints
    joints = np.full((J, 3), np.nan)
    status = []
    for j in range(J):
        try:
            joints[j] = estimate_joint(pm, targets.R[j], targets.S[j], targets.V[j], cfg, cam)
            status.append("ok")
        except NoEvidenceError:
            status.append("no_evidence")
    names = list(targets.joint_names) or [f"joint{j}" for j in range(J)]
    return PoseEstimate(joints, status, names)
