import numpy as np
import pytest

from maxmin_morl.envs import one_state_env, random_momdp


@pytest.fixture(scope="session")
def one_state():
    return one_state_env(0.9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_models(count, seed0=100, p_max=6, q_max=3, k_max=3, gamma=0.9):
    """Deterministic batch of small random models for property tests."""
    models = []
    rng = np.random.default_rng(seed0)
    for i in range(count):
        p = int(rng.integers(2, p_max + 1))
        q = int(rng.integers(2, q_max + 1))
        k = int(rng.integers(2, k_max + 1))
        models.append(random_momdp(seed0 + i, p, q, k, gamma))
    return models
