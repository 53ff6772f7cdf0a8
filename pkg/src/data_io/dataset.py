from dataclasses import dataclass

import numpy as np

from app.errors import ShapeError

SPLITS = ('train', 'validation', 'test')


@dataclass(frozen=True)
class Dataset:
    """Изображения N x H x W x C в [0, 1] и целочисленные метки"""
    images: np.ndarray
    labels: np.ndarray
    split: str = 'train'

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"неизвестный split {self.split!r}")
        if self.images.shape[0] != self.labels.shape[0]:
            raise ShapeError(f"изображений {self.images.shape[0]}, меток {self.labels.shape[0]}")
        self.images.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0
