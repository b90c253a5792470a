import numpy as np
import pytest

from handvote.aggregator import (AggregatorConfig, CandidateSet, NoEvidenceError, bilinear_sample,
                                 estimate_pose, mean_shift, select_candidates, weights_unweighted,
                                 weights_weighted)
from handvote.codec import DenseTargets, encode_targets
from handvote.geometry import DepthFrame, depth_to_pointmap
from handvote.selftest import fixed_point_oracle
from handvote.synth import frame_rng, synth_sample

from conftest import TAU48


def cset(points, weights=None):
    points = np.asarray(points, dtype=float)
    w = np.ones(len(points)) if weights is None else np.asarray(weights, dtype=float)
    return CandidateSet(points, w, np.zeros((len(points), 2), dtype=int))


def test_config_validation():
    for bad in ({"k_candidates": 0}, {"sigma": 0.0}, {"max_iters": 0}, {"stop_eps": 0.0},
                {"weighting": "median"}, {"theta": -1.0}):
        with pytest.raises(ValueError):
            AggregatorConfig(**bad)


def test_select_top_k_with_ties():
    S = np.array([[0.5, 0.9, 0.5], [0.9, 0.1, 0.0]])
    cand = np.arange(18, dtype=float).reshape(2, 3, 3)
    valid = S > 0
    cs = select_candidates(S, cand, valid, 3)
    assert cs.source_pixels.tolist() == [[0, 1], [1, 0], [0, 0]]
    assert np.array_equal(cs.points[0], cand[0, 1])
    assert len(select_candidates(S, cand, valid, 50)) == 5
    with pytest.raises(NoEvidenceError):
        select_candidates(S, cand, np.zeros_like(valid), 3)


def test_bilinear_sample():
    g = np.array([[0.0, 1.0], [2.0, 3.0]])
    assert bilinear_sample(g, 0.5, 0.5) == pytest.approx(1.5)
    assert bilinear_sample(g, 1.0, 1.0) == pytest.approx(3.0)
    assert bilinear_sample(g, 0.25, 0.0) == pytest.approx(0.25)
    assert bilinear_sample(g, -0.01, 0.5) == 0.0
    assert bilinear_sample(g, 0.5, 1.01) == 0.0


def test_weighted_falls_back_to_uniform(cam_simple):
    cs = cset([[0, 0, 500.0], [1000, 0, 500.0]])
    w = weights_weighted(cs, np.zeros(cam_simple.shape), cam_simple)
    assert np.array_equal(w.weights, [1.0, 1.0])
    R = np.zeros(cam_simple.shape)
    R[64, 64] = 0.8
    w = weights_weighted(cs, R, cam_simple)
    assert w.weights.tolist() == [pytest.approx(0.8), 0.0]


def test_unweighted_reads_source_pixel():
    R = np.array([[0.0, 0.5], [1.0, 0.0]])
    S = np.array([[0.2, 0.4], [0.6, 0.8]])
    cs = CandidateSet(np.zeros((2, 3)), np.ones(2), np.array([[0, 1], [1, 0]]))
    assert np.allclose(weights_unweighted(cs, R, S).weights, [1.5 * 0.4, 2.0 * 0.6])


def test_mean_shift_single_and_identical():
    assert np.array_equal(mean_shift(cset([[1.0, 2.0, 3.0]]), 40.0), [1.0, 2.0, 3.0])
    p = mean_shift(cset([[5.0, 5.0, 5.0]] * 4, [0.1, 1, 2, 3]), 10.0)
    assert np.allclose(p, 5.0, atol=1e-12)


def test_mean_shift_ignores_distant_outlier():
    pts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [500, 500, 500]]
    p = mean_shift(cset(pts), 20.0, max_iters=100, stop_eps=1e-9)
    assert np.linalg.norm(p - [1 / 3, 1 / 3, 0]) < 1e-3
    mean = np.mean(pts, axis=0)
    assert np.linalg.norm(mean - [1 / 3, 1 / 3, 0]) > 100


def test_mean_shift_no_positive_weight():
    with pytest.raises(NoEvidenceError):
        mean_shift(cset([[0, 0, 0.0]], [0.0]), 10.0)


def test_mean_shift_matches_loop_oracle():
    r = np.random.default_rng(21)
    for _ in range(100):
        k = int(r.integers(1, 11))
        pts = r.normal(0, 40, (k, 3))
        w = r.uniform(0.05, 1.0, k)
        sigma = float(r.uniform(5, 100))
        p, path = mean_shift(cset(pts, w), sigma, return_path=True)
        assert np.allclose(path[0], w @ pts / w.sum(), atol=1e-12)
        assert len(path) <= 31
        assert np.linalg.norm(p - fixed_point_oracle(pts.tolist(), w.tolist(), sigma, len(path) - 1)) < 1e-9


def test_mean_shift_frozen_value():
    pts = [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 30.0, 0.0]]
    p, path = mean_shift(cset(pts, [1.0, 2.0, 1.0]), 10.0, max_iters=30, stop_eps=1e-3, return_path=True)
    ref = fixed_point_oracle(pts, [1.0, 2.0, 1.0], 10.0, len(path) - 1)
    assert np.allclose(p, ref, atol=1e-9)
    # frozen from the loop oracle
    assert np.allclose(p, [7.090561, 0.098749, 0.0], atol=1e-6)


@pytest.mark.parametrize("weighting", ["weighted", "unweighted", "uniform"])
def test_round_trip(hand, cam48, weighting):
    cfg = AggregatorConfig(tau=TAU48, weighting=weighting)
    for i in range(10):
        frame, pose = synth_sample(hand, cam48, frame_rng(3, i))
        est = estimate_pose(depth_to_pointmap(frame), encode_targets(frame, pose, 80.0, TAU48), cfg, cam48)
        assert est.ok
        assert np.max(np.linalg.norm(est.joints - pose.joints, axis=1)) <= 0.1


def test_missing_evidence_is_flagged(cam48, sample48, targets48):
    frame, pose = sample48
    S = targets48.S.copy()
    S[2] = 0.0
    t = DenseTargets(targets48.R, S, targets48.V, 80.0, TAU48, targets48.joint_names)
    est = estimate_pose(depth_to_pointmap(frame), t, AggregatorConfig(tau=TAU48), cam48)
    assert est.status[2] == "no_evidence" and not est.ok
    assert np.isnan(est.joints[2]).all()
    assert np.isfinite(np.delete(est.joints, 2, axis=0)).all()


def test_empty_frame_fails_every_joint(cam48, targets48):
    frame = DepthFrame(np.zeros(cam48.shape), np.zeros(cam48.shape, bool), cam48)
    est = estimate_pose(depth_to_pointmap(frame), targets48, AggregatorConfig(tau=TAU48), cam48)
    assert set(est.status) == {"no_evidence"}


def test_listed_examples():
    p = mean_shift(cset([[0, 0, 0], [10, 0, 0]]), 40.0)
    assert np.allclose(p, [5, 0, 0], atol=1e-12)
    pts = [[0.0, 0, 0], [10.0, 0, 0]]
    p, path = mean_shift(cset(pts, [1.0, 3.0]), 40.0, return_path=True)
    assert np.linalg.norm(p - fixed_point_oracle(pts, [1.0, 3.0], 40.0, len(path) - 1)) <= 1e-9
    R = np.zeros((4, 4))
    R[1, 1], R[1, 2] = 0.2, 0.4
    assert bilinear_sample(R, 1.5, 1.0) == pytest.approx(0.3)


def test_k1_picks_nearest_surface_point(sample48, targets48):
    frame, pose = sample48
    pm = depth_to_pointmap(frame)
    from handvote.codec import recover_candidates

    for j in range(16):
        cand, valid = recover_candidates(pm, targets48.S[j], targets48.V[j], 80.0)
        cs = select_candidates(targets48.S[j], cand, valid, 1)
        d = np.linalg.norm(pm.points - pose.joints[j], axis=-1)
        d[~pm.valid] = np.inf
        r, c = cs.source_pixels[0]
        assert d[r, c] == pytest.approx(d.min())
