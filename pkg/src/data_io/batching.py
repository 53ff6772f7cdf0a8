from typing import Iterator, List

import numpy as np

from app.errors import EmptyDataset
from data_io.dataset import Dataset
from network.engine import Batch


def epoch_order(n: int, epoch_seed) -> np.ndarray:
    return np.random.default_rng(epoch_seed).permutation(n)


def make_batches(dataset: Dataset, batch_size: int, epoch_seed) -> List[Batch]:
    """
    Одна эпоха: перестановка индексов по seed, последний короткий батч сохраняется.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size={batch_size} < 1")
    n = len(dataset)
    if n == 0:
        raise EmptyDataset(f"пустой набор {dataset.split}")
    order = epoch_order(n, epoch_seed)
    return [
        Batch(dataset.images[idx], dataset.labels[idx])
        for idx in (order[i:i + batch_size] for i in range(0, n, batch_size))
    ]


def batch_stream(dataset: Dataset, batch_size: int, seed: int) -> Iterator[Batch]:
    """Бесконечный поток батчей; эпоха e перемешивается ключом (seed, e)"""
    epoch = 0
    while True:
        for batch in make_batches(dataset, batch_size, [seed, epoch]):
            yield batch
        epoch += 1
