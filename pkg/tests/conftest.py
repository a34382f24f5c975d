import numpy as np
import pytest

from simprior.physics import LatentBounds, generate_tasks
from simprior.policy import ActionSet, train


@pytest.fixture(scope="session")
def small_tasks():
    return generate_tasks(n_tasks=6, seed=3, folds=(2, 2, 2))


@pytest.fixture(scope="session")
def small_actions():
    return ActionSet(10, 10)


@pytest.fixture(scope="session")
def small_table(small_tasks, small_actions):
    return train(small_tasks, LatentBounds(), small_actions, lattice_res=3)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)
