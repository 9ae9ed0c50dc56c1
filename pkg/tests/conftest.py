import numpy as np
import pytest

from rdnn.model import NetworkConfig, init_model

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    return NetworkConfig(input_dims=(5, 3), num_categories=4, transform_dim=4, fusion_dim=6)


@pytest.fixture
def small_model(small_config):
    return init_model(small_config, seed=7)


def random_psd(rng, n, rank=None):
    g = rng.standard_normal((n, rank or n))
    return g @ g.T
