import os

import numpy as np
import pytest

from history.snapshot_store import RunMeta, SnapshotStore
from history.steps import required_steps


def make_store(trajectory, steps, count, stride=50, meta=None):
    """SnapshotStore, в котором вес i на шаге s равен trajectory(np.arange(count), s)[i]"""
    steps = sorted(steps)
    store = SnapshotStore(count, meta or RunMeta('0' * 32, 'sgd', 0, {'total_steps': steps[-1]}),
                          required=steps, stride=stride)
    for step in steps:
        store.record(step, np.asarray(trajectory(np.arange(count), step), dtype=np.float32))
    return store


def linear_trajectory(idx, step):
    return 0.01 * idx + (idx + 1) * 1e-4 * step


@pytest.fixture
def linear_store():
    """
    Восемь весов, вес i растёт линейно со скоростью (i + 1) * 1e-4 за шаг.
    Записаны все шаги, нужные для построения набора на t в [100, 1000] при k = 2.
    """
    steps = required_steps(build_range=(100, 1000), k=2.0, stride=50, run_length=2000)
    return make_store(linear_trajectory, steps, 8)


@pytest.fixture
def mnist_dir():
    path = os.getenv('MNIST_DIR')
    if not path:
        pytest.skip("MNIST_DIR не задан")
    return path
