"""Shared pytest setup: flat modules on sys.path, seeded fixtures, the slow marker"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from samplers import knn_graph_spec, sample_gaussian  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run Monte-Carlo acceptance checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte-Carlo acceptance check (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def gaussian_spec():
    """p=6 Gaussian on the 4-nearest-neighbor graph (bands 0.5, 0.3)"""
    return knn_graph_spec("gaussian", 6, 4, (0.5, 0.3))


@pytest.fixture
def gaussian_data(gaussian_spec):
    return sample_gaussian(gaussian_spec, 2000, seed=7)


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    """Keep dataset caches and results inside the test's tmp directory"""
    monkeypatch.chdir(tmp_path)
