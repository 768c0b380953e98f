"""Shared fixtures"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add repository root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.grid import SpatialGrid
from src.core.integrator import StepConfig
from src.core.model import CostParams, RegimeParams, SivParams
from src.core.regime import RegimeChain


DEFAULT_GENERATOR = [[-5.5, 5.5], [8.0, -8.0]]


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale runs (deselect with -m 'not slow')")


def zero_regime(**changes) -> RegimeParams:
    """Regime with every rate zero, diffusion off"""
    values = dict(p=0.0, b=0.0, beta=0.0, mu=0.0, alpha=0.0, e=0.0, sigma=0.0, m=0.0, eta=0.0,
                  d1=0.0, d2=0.0, d3=0.0)
    values.update(changes)
    return RegimeParams(**values)


@pytest.fixture
def default_params():
    return SivParams.defaults()


@pytest.fixture
def regime_one():
    return SivParams.single(SivParams.defaults().regimes[0])


@pytest.fixture
def default_chain():
    return RegimeChain.from_rows(DEFAULT_GENERATOR)


@pytest.fixture
def single_chain():
    return RegimeChain.from_rows([[0.0]])


@pytest.fixture
def grid8():
    return SpatialGrid(8)


@pytest.fixture
def cell():
    return SpatialGrid(1)


@pytest.fixture
def cost():
    return CostParams()


@pytest.fixture
def short_steps():
    return StepConfig(dt=0.01, t_final=0.5, rng_seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
