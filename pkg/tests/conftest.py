import numpy as np
import pytest

from cellfree.config import ScenarioConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    """Quick scenario that still exercises every scheme."""
    return ScenarioConfig(K=12, L=40, N=2, U=8, area_side=1000.0, n_channel_realizations=20, trial_chunk=10)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
