import json

import numpy as np
import pytest

from handvote import io
from handvote.cli import main

SMALL = {
    "camera": {"fx": 67.2, "fy": 67.2, "cx": 15.5, "cy": 15.5, "width": 32, "height": 32},
    "codec": {"tau_px": 3.0},
    "synth": {"model": "hand5"},
    "train": {"steps": 2, "batch": 2, "channels": 2, "levels": 2},
}


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


@pytest.fixture
def data(tmp_path, cfg):
    out = tmp_path / "data"
    assert main(["synth", "--config", cfg, "--count", "4", "--seed", "3", "--out", str(out)]) == 0
    return out


def tree_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_synth_is_byte_identical(tmp_path, cfg, data):
    again = tmp_path / "again"
    assert main(["synth", "--config", cfg, "--count", "4", "--seed", "3", "--out", str(again)]) == 0
    assert tree_bytes(data) == tree_bytes(again)
    assert len(list(data.glob("*.pgm"))) == 4


def test_synth_zero_count(tmp_path, cfg):
    assert main(["synth", "--config", cfg, "--count", "0", "--out", str(tmp_path / "z")]) == 0
    assert io.read_json(tmp_path / "z" / "manifest.json")["samples"] == []


@pytest.mark.parametrize("weighting", ["weighted", "unweighted"])
def test_encode_decode_round_trip(tmp_path, cfg, data, weighting):
    enc, dec = tmp_path / "enc", tmp_path / "dec"
    poses = sorted(str(p) for p in data.glob("pose_*.json"))
    assert main(["encode", "--config", cfg, "--frames", str(data), "--poses", *poses, "--out", str(enc)]) == 0
    assert len(list(enc.glob("*.dvt"))) == 4
    assert main(["decode", "--config", cfg, "--frames", str(data), "--targets", str(enc),
                 "--weighting", weighting, "--out", str(dec)]) == 0
    for i in range(4):
        est, _, status = io.read_pose_record(dec / f"frame_{i:05d}.json")
        gt = io.read_pose(data / f"pose_{i:05d}.json")
        assert status == ["ok"] * 5
        assert np.max(np.linalg.norm(est - gt.joints, axis=1)) <= 0.1


def test_corrupt_target_file_exits_2(tmp_path, cfg, data, capsys):
    bad = tmp_path / "bad.dvt"
    bad.write_bytes(b"XXXX" + (data / "targets_00000.dvt").read_bytes()[4:])
    code = main(["decode", "--config", cfg, "--frames", str(data / "frame_00000.pgm"), "--targets", str(bad),
                 "--out", str(tmp_path / "o")])
    assert code == 2
    assert "offset 0" in capsys.readouterr().err


def test_missing_input_exits_3(tmp_path, cfg):
    code = main(["decode", "--config", cfg, "--frames", str(tmp_path / "none.pgm"),
                 "--targets", str(tmp_path / "none.dvt"), "--out", str(tmp_path / "o")])
    assert code == 3


def test_bad_config_exits_2(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"aggregator": {"kk": 1}}')
    assert main(["selftest", "--config", str(path)]) == 2


def test_eval_perfect_predictions(tmp_path, cfg, data, capsys):
    out = tmp_path / "rep"
    poses = sorted(str(p) for p in data.glob("pose_*.json"))
    assert main(["eval", "--config", cfg, "--pred", *poses, "--gt", str(data), "--out", str(out)]) == 0
    assert "mean_error_mm=0.000000 frames=4 failed=0" in capsys.readouterr().out
    assert (out / "metrics.csv").read_text().splitlines()[1] == "method,0.000000,4,0"
    assert (out / "success_curve.svg").exists()


def test_eval_count_mismatch(tmp_path, cfg, data):
    code = main(["eval", "--config", cfg, "--pred", str(data / "pose_00000.json"), "--gt", str(data),
                 "--out", str(tmp_path / "r")])
    assert code == 2


def test_single_cell_sweep(tmp_path, cfg, data):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfg, "--data", str(data / "manifest.json"), "--grid", '{"k": [5]}',
                 "--out", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert len(rows) == 2 and rows[1].startswith("k=5,")


def test_train_infer_deterministic(tmp_path, cfg, data):
    outs = []
    for tag in ("a", "b"):
        d = tmp_path / tag
        d.mkdir()
        assert main(["train", "--config", cfg, "--data", str(data / "manifest.json"),
                     "--out-model", str(d / "m.json"), "--log", str(d / "log.csv")]) == 0
        outs.append(tree_bytes(d))
    assert outs[0] == outs[1]
    pred = tmp_path / "pred"
    assert main(["infer", "--config", cfg, "--model", str(tmp_path / "a" / "m.json"), "--frames", str(data),
                 "--out", str(pred)]) == 0
    assert len(list(pred.glob("frame_*.json"))) == 4


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "FAIL" not in out
