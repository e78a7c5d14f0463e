import time

import pytest

from pcadv.train import TrainConfig, generate_dataset, train_model

DESK = dict(n_per_class=50, points_per_cloud=256, seed=1)


@pytest.fixture(scope="session")
def desk_dataset():
    return generate_dataset(**DESK)


@pytest.fixture(scope="session")
def desk_training(desk_dataset):
    """Default-config model on the desk dataset, with loss curve and wall time."""
    history = []
    start = time.perf_counter()
    params = train_model(desk_dataset, TrainConfig(), history)
    return params, history, time.perf_counter() - start


@pytest.fixture(scope="session")
def desk_model(desk_training):
    return desk_training[0]


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_dataset(8, 64, seed=5, classes=("sphere", "cube", "torus"))


@pytest.fixture(scope="session")
def tiny_model(tiny_dataset):
    return train_model(tiny_dataset, TrainConfig(epochs=15, seed=3))
