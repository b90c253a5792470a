import numpy as np
import pytest

from handvote.aggregator import AggregatorConfig
from handvote.eval import (cell_label, evaluate, expand_grid, joint_errors, mean_joint_error, success_curve_svg,
                           success_rate_curve, sweep, write_report)
from handvote.synth import NoiseConfig, frame_rng, synth_sample
from handvote.codec import encode_targets


def fixture():
    """Three frames whose worst joint errors are 5, 15 and 25 mm."""
    gts = [np.zeros((2, 3))] * 3
    preds = [np.array([[5.0, 0, 0], [0, 0, 0]]),
             np.array([[0, 15.0, 0], [1, 0, 0]]),
             np.array([[0, 0, 25.0], [0, 0, 0]])]
    return preds, gts


def test_pythagorean_error():
    gt = np.zeros((4, 3))
    pred = gt.copy()
    pred[2] = [3, 4, 0]
    assert joint_errors([pred], [gt]).tolist() == [[0, 0, 5, 0]]
    assert mean_joint_error([pred], [gt]) == 5 / 4


def test_mean_error_matches_loop():
    r = np.random.default_rng(0)
    for _ in range(20):
        F, J = r.integers(1, 6), r.integers(1, 17)
        P, G = r.normal(size=(F, J, 3)), r.normal(size=(F, J, 3))
        total = 0.0
        for f in range(F):
            for j in range(J):
                total += sum((P[f, j, c] - G[f, j, c]) ** 2 for c in range(3)) ** 0.5
        assert mean_joint_error(list(P), list(G)) == pytest.approx(total / (F * J), rel=1e-12)


def test_mean_error_rejects_bad_input():
    with pytest.raises(ValueError):
        mean_joint_error([np.zeros((2, 3))], [np.zeros((3, 3))])
    with pytest.raises(ValueError):
        mean_joint_error([], [])
    with pytest.raises(ValueError):
        mean_joint_error([np.full((1, 3), np.nan)], [np.zeros((1, 3))])


def test_success_fixture():
    curve = dict(success_rate_curve(*fixture(), [0, 5, 10, 15, 20, 25, 30, np.inf]))
    assert curve[20.0] == pytest.approx(2 / 3)
    assert curve[0.0] == 0.0 and curve[np.inf] == 1.0
    assert curve[5.0] == 0.0 and curve[15.0] == pytest.approx(1 / 3)  # strictly below the threshold


def test_success_exact_match_and_order():
    assert success_rate_curve([np.zeros((1, 3))], [np.zeros((1, 3))], [0.0]) == [(0.0, 0.0)]
    with pytest.raises(ValueError):
        success_rate_curve(*fixture(), [10, 5])


def test_success_monotone_random():
    r = np.random.default_rng(1)
    th = list(np.linspace(0, 100, 51))
    for _ in range(20):
        P, G = r.normal(0, 20, (30, 5, 3)), np.zeros((30, 5, 3))
        fr = [f for _, f in success_rate_curve(list(P), list(G), th)]
        assert all(b >= a for a, b in zip(fr, fr[1:]))


def test_evaluate_counts_failures():
    preds, gts = fixture()
    preds = preds + [np.array([[np.nan] * 3, [0, 0, 0]])]
    res = evaluate(preds, gts + [np.zeros((2, 3))], [20.0, 1000.0])
    assert res.frame_count == 4 and res.failed_frames == 1
    assert res.mean_error_mm == pytest.approx((5 + 15 + 1 + 25) / 6)
    assert res.success_curve == [(20.0, 0.5), (1000.0, 0.75)]


def test_report_files_deterministic(tmp_path):
    res = evaluate(*fixture(), [0, 10, 20, 30])
    write_report([("a<b", res), ("k=5", res)], tmp_path / "1")
    write_report([("a<b", res), ("k=5", res)], tmp_path / "2")
    for name in ("metrics.csv", "success_curve.svg"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "2" / name).read_bytes()
    csv = (tmp_path / "1" / "metrics.csv").read_text().splitlines()
    assert csv == ["config,mean_error_mm,frames,failed", "a<b,7.666667,3,0", "k=5,7.666667,3,0"]
    svg = success_curve_svg([("a<b", res)])
    assert svg.startswith("<svg") and svg.count("<polyline") == 1
    assert "threshold (mm)" in svg and "fraction of frames" in svg and "a&lt;b" in svg


def test_grid_expansion():
    cells = expand_grid({"weighting": ["weighted", "unweighted"], "k": [1, 5]})
    assert [cell_label(c) for c in cells] == ["k=1 weighting=weighted", "k=1 weighting=unweighted",
                                              "k=5 weighting=weighted", "k=5 weighting=unweighted"]
    assert expand_grid({"sigma_mm": 20.0}) == [{"sigma_mm": 20.0}]
    with pytest.raises(ValueError):
        expand_grid({"theta": [1]})


def test_sweep_clean_targets_are_exact(hand, cam48):
    data = []
    for i in range(4):
        frame, pose = synth_sample(hand, cam48, frame_rng(9, i))
        data.append((frame, pose, encode_targets(frame, pose, 80.0, 4.5)))
    rows = sweep(data, {"k": [1, 5]}, AggregatorConfig(tau=4.5))
    assert [name for name, _ in rows] == ["k=1", "k=5"]
    assert all(r.mean_error_mm < 1e-6 and r.frame_count == 4 for _, r in rows)
    noisy = sweep(data, {"k": 5}, AggregatorConfig(tau=4.5),
                  NoiseConfig(target_noise_std_S=0.05, target_noise_std_V=0.05, seed=2))
    assert len(noisy) == 1 and noisy[0][1].mean_error_mm > 0.1
