import numpy as np
import pytest

from zvmc.model import MarkovRewardModel, random_model, two_state_model


@pytest.fixture
def two_state():
    return two_state_model()


@pytest.fixture
def small_models():
    rng = np.random.default_rng(11)
    return [random_model(n, rng, n_absorbing=k) for n, k in ((3, 1), (4, 1), (5, 2), (6, 2))]


def self_loop_model(stay=0.9, beta=1.0, reward_on_stay=0.0):
    """One transient state 1 that loops with probability ``stay`` and exits to K = {0}."""
    P = np.array([[1.0, 0.0], [1.0 - stay, stay]])
    s = np.array([[0.0, 0.0], [1.0, reward_on_stay]])
    return MarkovRewardModel(P=P, absorbing=(0,), s=s, beta=np.full((2, 2), beta))
