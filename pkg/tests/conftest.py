import numpy as np
import pytest

from handvote.codec import encode_targets
from handvote.geometry import CameraIntrinsics
from handvote.synth import default_camera, default_hand, frame_rng, small_hand, synth_sample

TAU48 = 12.0 * 48 / 128


@pytest.fixture
def cam48():
    return default_camera(48)


@pytest.fixture
def cam_simple():
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=64.0, cy=64.0, width=128, height=128)


@pytest.fixture
def hand():
    return default_hand()


@pytest.fixture
def hand5():
    return small_hand()


@pytest.fixture
def sample48(hand, cam48):
    return synth_sample(hand, cam48, frame_rng(11, 0))


@pytest.fixture
def targets48(sample48):
    frame, pose = sample48
    return encode_targets(frame, pose, 80.0, TAU48)


def rng(seed=0):
    return np.random.default_rng(seed)


ACCEPTANCE_LINES = []


def report(criterion: str, ok: bool, detail: str) -> None:
    """Record one acceptance result; all of them are printed at the end of the run."""
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
