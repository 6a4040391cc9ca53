import numpy as np
import pytest

from eqzero.worldmodel import ModelConfig


@pytest.fixture
def small_config() -> ModelConfig:
    """Tiny model shapes: fast enough to re-initialise hundreds of times."""
    return ModelConfig(obs_channels=4, obs_size=6, n_actions=4, channels=4, hidden=8)


@pytest.fixture
def np_rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))
