from typing import Tuple

import numpy as np

from data_io.dataset import Dataset

BLOB_STD = 0.05


def synth_dataset(n: int, classes: int, seed: int, image_shape: Tuple[int, ...] = (8, 8, 1),
                  split: str = 'train') -> Dataset:
    """
    Гауссовы облака в пространстве пикселей, по одному на класс.

    Центры зависят только от (classes, image_shape): наборы с разными seed
    делят центры, и обучающая и валидационная выборки описывают одну задачу.
    """
    if classes < 1 or n < classes:
        raise ValueError(f"нужно n >= classes >= 1, получено n={n}, classes={classes}")
    dim = int(np.prod(image_shape))
    centers = np.random.default_rng([classes, dim]).uniform(0.15, 0.85, size=(classes, dim))

    rng = np.random.default_rng([seed, 1])
    labels = rng.permutation(np.arange(n) % classes)
    noise = rng.normal(0.0, BLOB_STD, size=(n, dim))
    images = np.clip(centers[labels] + noise, 0.0, 1.0).astype(np.float32)
    return Dataset(images.reshape((n,) + tuple(image_shape)), labels.astype(np.int64), split)
