import numpy as np
import pytest

from cpscan.fixtures import metrology_scene, reference_rig
from cpscan.patterns import PatternSpec


@pytest.fixture(scope="session")
def rig():
    return reference_rig()


@pytest.fixture(scope="session")
def ideal_rig():
    return reference_rig(distortion=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_spec():
    return PatternSpec(256, 128, 32, "vertical")


@pytest.fixture(scope="session")
def noiseless_scan(rig):
    from cpscan.pipeline import run_scan

    return run_scan(rig, metrology_scene(gamma=1.0, noise_sigma=0.0))


def make_small_rig():
    from cpscan.geometry import Pose, SensorModel, StereoRig
    from cpscan.simulator import _rot

    cam = SensorModel(400, 300, 500.0, 500.0, 200.0, 150.0)
    proj = SensorModel(256, 192, 450.0, 450.0, 128.0, 96.0)
    yaw = -np.degrees(np.arctan2(0.15, 1.0))
    return StereoRig(cam, proj, Pose(_rot("y", yaw), [0.15, 0.0, 0.0]))


def make_small_scene(**kw):
    from cpscan.simulator import Board, SceneSpec, _rot

    board = Board.facing([0.0, 0.0, 1.0], _rot("y", 10.0), squares_x=8, squares_y=6, square_size=0.05, albedo_light=0.95, albedo_dark=0.55)
    return SceneSpec(board, **kw)


def make_small_stack():
    from cpscan.patterns import full_pattern_stack

    return full_pattern_stack(PatternSpec(256, 192, 16, "vertical"), PatternSpec(256, 192, 24, "horizontal"))


@pytest.fixture(scope="session")
def small_rig():
    return make_small_rig()


@pytest.fixture(scope="session")
def small_stack():
    return make_small_stack()


@pytest.fixture(scope="session")
def small_scan(small_rig, small_stack):
    from cpscan.pipeline import run_scan

    return run_scan(small_rig, make_small_scene(), small_stack)


ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion; the lines are repeated in the terminal summary."""

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
        ACCEPTANCE_LINES[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
