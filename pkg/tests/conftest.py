import numpy as np
import pytest

from syncmapv2.config import PipelineConfig
from syncmapv2.dynamics import DynamicsConfig


@pytest.fixture
def tiny_cfg():
    # small enough for unit tests: 12x12 grid of 8x8 patches, 3000 steps
    return PipelineConfig(resize=96, grid=12, tau=3000, n_max=6,
                          dynamics=DynamicsConfig(movmean_window=200))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from _acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
