import os

import numpy as np
import pytest

from graph_core import load_graph
from run_config import RunConfig

FIXTURE_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "fixtures")


@pytest.fixture
def fixture_path():
    def _path(name: str) -> str:
        return os.path.join(FIXTURE_DIR, f"{name}.json")
    return _path


@pytest.fixture
def load(fixture_path):
    def _load(name: str):
        return load_graph(fixture_path(name))
    return _load


@pytest.fixture
def config():
    return RunConfig().validate()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
