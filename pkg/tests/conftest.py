import numpy as np
import pytest

from npme.config import load_config
from npme.pipeline import build_scenario


@pytest.fixture(scope="session")
def reference_cfg():
    return load_config(None)


@pytest.fixture(scope="session")
def reference_scenario(reference_cfg):
    return build_scenario(reference_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
