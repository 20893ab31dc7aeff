import numpy as np
import pytest

from qshield.config import Config
from qshield.frenet import ReferencePath
from qshield.geometry import Junction, Route


@pytest.fixture
def cfg():
    return Config()


@pytest.fixture
def junction(cfg):
    return Junction(cfg.scenario.geometry,
                    conflict_reach=cfg.scenario.vehicle_width + 0.5)


@pytest.fixture
def ego_path(junction):
    return ReferencePath(junction.ego_route)


@pytest.fixture
def straight_path():
    """A 100 m straight east-west reference line for analytic checks."""
    pts = np.stack([np.linspace(0.0, 100.0, 201), np.zeros(201)], axis=1)
    return ReferencePath(Route("straight", pts))


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)
