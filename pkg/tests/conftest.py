import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rbmshape import synth
from rbmshape.energy import TrainConfig
from rbmshape.frontal import train_frontal
from rbmshape.fusion import estimate_sigma_l
from rbmshape.pose import POSE_LEARNING_RATE, train_pose

POSE = 22.5


@pytest.fixture(scope="session")
def corpus():
    rng = np.random.default_rng(1234)
    train = np.array([r.coords for r in synth.sample_shapes(1000, rng)])
    test = np.array([r.coords for r in synth.sample_shapes(100, rng)])
    return train, test


@pytest.fixture(scope="session")
def frontal(corpus):
    """A lightly trained two-layer prior shared by the unit tests."""
    return train_frontal(corpus[0], (50, 25), TrainConfig(epochs=150, rng_seed=1))


@pytest.fixture(scope="session")
def pose_model(frontal, corpus):
    train = corpus[0][:500]
    x = np.concatenate([train, train])
    y = np.concatenate([synth.project_pose(train, -POSE), synth.project_pose(train, POSE)])
    return train_pose(frontal, x, y, (20, 32), TrainConfig(epochs=150, learning_rate=POSE_LEARNING_RATE, rng_seed=2))


@pytest.fixture(scope="session")
def noise_model(corpus):
    """Sigma_l calibrated on i.i.d. 0.05 IOD measurement noise."""
    rng = np.random.default_rng(5)
    truth = corpus[0][:300]
    return estimate_sigma_l(truth, truth + 0.05 * rng.standard_normal(truth.shape))


_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture
def criterion(request):
    """``criterion(number, name, ok, detail)`` logs a PASS/FAIL line and asserts ``ok``."""
    lines = request.config.stash[_CRITERIA]

    def report(number, name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}  {name}: {detail}"
        lines[number] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_CRITERIA]
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
