"""
Чтение и запись файлов IDX (формат распространения MNIST).

  [offset] [type]          [value]          [description]
  0000     32 bit integer  0x00000803(2051) magic (изображения)
  0004     32 bit integer  N                number of images
  0008     32 bit integer  rows
  0012     32 bit integer  cols
  0016     unsigned byte   ??               pixel ...

  0000     32 bit integer  0x00000801(2049) magic (метки)
  0004     32 bit integer  N                number of items
  0008     unsigned byte   ??               label ...

Все целые big-endian. Файлы *.gz читаются прозрачно.
"""
import gzip
import logging
import struct
import zlib
from pathlib import Path
from typing import Tuple

import numpy as np

from app.errors import FormatError
from data_io.dataset import Dataset

logger = logging.getLogger('data_io')

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    'train': ('train-images-idx3-ubyte', 'train-labels-idx1-ubyte'),
    'test': ('t10k-images-idx3-ubyte', 't10k-labels-idx1-ubyte'),
}


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix != '.gz':
        with open(path, 'rb') as f:
            return f.read()
    try:
        with gzip.open(path, 'rb') as f:
            return f.read()
    except (EOFError, gzip.BadGzipFile, zlib.error) as e:
        raise FormatError(f"{path}: повреждённый gzip ({e})")


def _parse(raw: bytes, magic: int, ndim: int, name: str) -> np.ndarray:
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{name}: файл короче заголовка ({len(raw)} байт)")
    found = struct.unpack('>I', raw[:4])[0]
    if found != magic:
        raise FormatError(f"{name}: magic 0x{found:08x}, ожидается 0x{magic:08x}")
    dims = struct.unpack(f'>{ndim}I', raw[4:header])
    count = int(np.prod(dims, dtype=np.int64))
    payload = raw[header:]
    if len(payload) != count:
        raise FormatError(f"{name}: ожидается {count} байт данных, найдено {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, split: str = 'train') -> Dataset:
    """Загружает пару IDX-файлов; пиксели делятся на 255"""
    raw_images = _parse(_read_bytes(images_path), IMAGES_MAGIC, 3, str(images_path))
    raw_labels = _parse(_read_bytes(labels_path), LABELS_MAGIC, 1, str(labels_path))
    if raw_images.shape[0] != raw_labels.shape[0]:
        raise FormatError(f"число изображений {raw_images.shape[0]} != число меток {raw_labels.shape[0]}")

    images = (raw_images.astype(np.float32) / np.float32(255.0))[..., None]
    labels = raw_labels.astype(np.int64)
    logger.info(f"Загружено {images.shape[0]} изображений {images.shape[1:]} из {images_path}")
    return Dataset(images, labels, split)


def encode_idx(dataset: Dataset) -> Tuple[bytes, bytes]:
    """Байты IDX для изображений и меток (обратное к load_idx для одноканальных данных)"""
    if dataset.images.ndim != 4 or dataset.images.shape[-1] != 1:
        raise FormatError(f"IDX хранит только одноканальные изображения, форма {dataset.images.shape}")
    n, h, w, _ = dataset.images.shape
    pixels = np.rint(dataset.images[..., 0] * 255.0)
    if pixels.min(initial=0) < 0 or pixels.max(initial=0) > 255:
        raise FormatError("пиксели вне [0, 1]")
    images = struct.pack('>IIII', IMAGES_MAGIC, n, h, w) + pixels.astype(np.uint8).tobytes()
    labels = struct.pack('>II', LABELS_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes()
    return images, labels


def write_idx(dataset: Dataset, images_path, labels_path) -> None:
    images, labels = encode_idx(dataset)
    Path(images_path).write_bytes(images)
    Path(labels_path).write_bytes(labels)


def _find(data_dir: Path, stem: str) -> Path:
    for candidate in (data_dir / stem, data_dir / f"{stem}.gz"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"в {data_dir} нет файла {stem}[.gz]")


def load_mnist_dir(data_dir) -> Tuple[Dataset, Dataset]:
    """
    Находит четыре файла MNIST по стандартным именам.

    Returns:
        (train, validation); валидацией служит стандартный тестовый файл на 10k
    """
    data_dir = Path(data_dir)
    train_images, train_labels = MNIST_FILES['train']
    test_images, test_labels = MNIST_FILES['test']
    train = load_idx(_find(data_dir, train_images), _find(data_dir, train_labels), 'train')
    validation = load_idx(_find(data_dir, test_images), _find(data_dir, test_labels), 'validation')
    return train, validation
