"""
Shared fixtures. Long Monte-Carlo runs are marked `slow`:
    pytest                # fast suites only
    pytest --runslow      # everything
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.channel_model import ChannelMatrix, PropagationParams, ScenarioSpec


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte-Carlo tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte-Carlo run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_channel():
    """Well-conditioned synthetic channel: direct 0.5-1, cross 0.05-0.5, unit noise."""
    def _creator(n_links=4, seed=0, noise=1.0):
        r = np.random.default_rng(seed)
        gains = r.uniform(0.05, 0.5, size=(n_links, n_links))
        gains[np.diag_indices(n_links)] = r.uniform(0.5, 1.0, size=n_links)
        return ChannelMatrix(gains, noise)
    return _creator


@pytest.fixture
def propagation():
    return PropagationParams()


@pytest.fixture
def scen1():
    return ScenarioSpec(n_links=10)


@pytest.fixture
def scen2():
    return ScenarioSpec(n_links=10, max_pair_distance_m=3.0)
