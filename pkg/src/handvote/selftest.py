"""Quick property suite behind ``handvote selftest``.

Each check returns (name, passed, detail). Oracles here are written independently
of the code paths they check (plain loops, direct formulas).
"""

from __future__ import annotations

import math
import time

import numpy as np

from .aggregator import AggregatorConfig, CandidateSet, estimate_pose, mean_shift
from .codec import encode_targets
from .eval import success_rate_curve
from .geometry import depth_to_pointmap
from .learner import Architecture, Predictor, forward, gradient_check, loss
from .synth import default_camera, default_hand, frame_rng, small_hand, synth_sample


def fixed_point_oracle(points, weights, sigma, iters):
    """Scalar-loop mean shift from the weighted mean, for a fixed number of iterations."""
    n = len(points)
    sw = sum(weights)
    p = [sum(weights[i] * points[i][c] for i in range(n)) / sw for c in range(3)]
    for _ in range(iters):
        num = [0.0, 0.0, 0.0]
        den = 0.0
        for i in range(n):
            d2 = sum((points[i][c] - p[c]) ** 2 for c in range(3))
            k = math.exp(-d2 / (2 * sigma * sigma)) * weights[i]
            den += k
            for c in range(3):
                num[c] += k * points[i][c]
        p = [num[c] / den for c in range(3)]
    return np.array(p)


def check_round_trip(n_frames: int = 20):
    cam = default_camera(48)
    model = default_hand()
    worst = 0.0
    for weighting in ("weighted", "unweighted"):
        cfg = AggregatorConfig(tau=4.5, weighting=weighting)
        for i in range(n_frames):
            frame, pose = synth_sample(model, cam, frame_rng(1234, i))
            est = estimate_pose(depth_to_pointmap(frame), encode_targets(frame, pose, cfg.theta, cfg.tau),
                                cfg, cam)
            worst = max(worst, float(np.max(np.linalg.norm(est.joints - pose.joints, axis=1))))
    return "encode->decode round trip", worst <= 0.1, f"max error {worst:.2e} mm"


def check_mean_shift_oracle(n_sets: int = 200):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(n_sets):
        k = int(rng.integers(1, 11))
        pts = rng.normal(0, 30, size=(k, 3))
        w = rng.uniform(0.1, 2.0, size=k)
        sigma = float(rng.uniform(10, 80))
        _, path = mean_shift(CandidateSet(pts, w, np.zeros((k, 2), int)), sigma, 30, 1e-3, return_path=True)
        ref = fixed_point_oracle(pts.tolist(), w.tolist(), sigma, len(path) - 1)
        worst = max(worst, float(np.linalg.norm(path[-1] - ref)))
    return "mean shift vs fixed-point oracle", worst <= 1e-9, f"max deviation {worst:.2e} mm"


def check_gradient():
    model = small_hand()
    frame, pose = synth_sample(model, default_camera(16), frame_rng(3, 0))
    arch = Architecture(size=16, joints=5, channels=2, stacks=2, levels=2)
    pr = Predictor(arch)
    rng = np.random.default_rng(0)
    params = pr.init_params(rng)
    for _, (w, b) in pr.views(params).items():
        b[...] = rng.uniform(-0.1, 0.1, size=b.shape)
    gt = encode_targets(frame, pose, 80.0, 1.5)
    err = gradient_check(pr, params, frame, gt, h=1e-5, n_coords=200, rng=rng)
    return "backprop vs central differences", err < 1e-4, f"max relative error {err:.2e}"


def check_loss_decomposition():
    frame, pose = synth_sample(small_hand(), default_camera(16), frame_rng(4, 0))
    gt = encode_targets(frame, pose, 80.0, 1.5)
    pr = Predictor(Architecture(size=16, joints=5, channels=3, stacks=2, levels=2))
    out = forward(pr, pr.init_params(np.random.default_rng(1)), frame)
    lb = loss(out, gt)
    rel = abs(lb.terms.sum() - lb.total) / max(lb.total, 1e-300)
    return "loss breakdown sums to total", rel <= 1e-10, f"relative gap {rel:.1e}"


def check_success_curve():
    gts = [np.zeros((2, 3))] * 3
    preds = [np.array([[5.0, 0, 0], [0, 0, 0]]), np.array([[0, 15.0, 0], [1, 0, 0]]),
             np.array([[0, 0, 25.0], [0, 0, 0]])]
    frac = dict(success_rate_curve(preds, gts, [0, 10, 20, 30]))[20.0]
    return "success-rate fixture", abs(frac - 2 / 3) < 1e-12, f"fraction at 20 mm = {frac:.4f}"


CHECKS = (check_round_trip, check_mean_shift_oracle, check_gradient, check_loss_decomposition,
          check_success_curve)


def run_all():
    for check in CHECKS:
        t0 = time.perf_counter()
        try:
            name, ok, detail = check()
        except Exception as e:  # a crash is a failed check, not an aborted suite
            name, ok, detail = check.__name__, False, f"{type(e).__name__}: {e}"
        yield name, ok, f"{detail} ({time.perf_counter() - t0:.1f} s)"
