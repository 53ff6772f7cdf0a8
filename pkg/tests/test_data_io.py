import gzip
import struct

import numpy as np
import pytest

from app.errors import EmptyDataset, FormatError
from data_io.batching import batch_stream, epoch_order, make_batches
from data_io.dataset import Dataset
from data_io.idx_reader import encode_idx, load_idx, load_mnist_dir, write_idx
from data_io.synthetic import synth_dataset
from network.engine import Batch, backward, forward
from network.params import InitRule, init_params
from network.spec import Dense, NetworkSpec, SoftmaxXent
from optim.optimizers import make_state, optimizer_step


def _write_pair(tmp_path, images: bytes, labels: bytes):
    images_path, labels_path = tmp_path / 'images', tmp_path / 'labels'
    images_path.write_bytes(images)
    labels_path.write_bytes(labels)
    return images_path, labels_path


class TestLoadIdx:

    def test_two_images(self, tmp_path):
        images = bytes.fromhex('00000803') + struct.pack('>III', 2, 2, 2) + bytes([0, 255, 51, 102, 1, 2, 3, 4])
        labels = struct.pack('>II', 0x801, 2) + bytes([3, 7])
        dataset = load_idx(*_write_pair(tmp_path, images, labels))
        assert len(dataset) == 2
        assert dataset.image_shape == (2, 2, 1)
        assert dataset.images[0, 0, 1, 0] == 1.0
        assert dataset.images[0, 1, 0, 0] == pytest.approx(0.2)
        np.testing.assert_array_equal(dataset.labels, [3, 7])

    def test_label_file_with_image_magic(self, tmp_path):
        images = struct.pack('>IIII', 0x803, 1, 1, 1) + bytes([9])
        labels = struct.pack('>II', 0x803, 1) + bytes([1])
        with pytest.raises(FormatError):
            load_idx(*_write_pair(tmp_path, images, labels))

    def test_truncated_payload(self, tmp_path):
        images = struct.pack('>IIII', 0x803, 2, 2, 2) + bytes(7)
        labels = struct.pack('>II', 0x801, 2) + bytes(2)
        with pytest.raises(FormatError):
            load_idx(*_write_pair(tmp_path, images, labels))

    def test_count_mismatch(self, tmp_path):
        images = struct.pack('>IIII', 0x803, 2, 1, 1) + bytes(2)
        labels = struct.pack('>II', 0x801, 3) + bytes(3)
        with pytest.raises(FormatError):
            load_idx(*_write_pair(tmp_path, images, labels))

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        pixels = rng.integers(0, 256, size=(5, 3, 4, 1)).astype(np.float32) / np.float32(255.0)
        original = Dataset(pixels, rng.integers(0, 10, size=5))
        write_idx(original, tmp_path / 'i', tmp_path / 'l')
        reloaded = load_idx(tmp_path / 'i', tmp_path / 'l')
        np.testing.assert_array_equal(reloaded.images, original.images)
        np.testing.assert_array_equal(reloaded.labels, original.labels)

    def test_mnist_dir_with_gzip(self, tmp_path):
        dataset = Dataset(np.zeros((3, 2, 2, 1), dtype=np.float32), np.array([0, 1, 2]))
        images, labels = encode_idx(dataset)
        (tmp_path / 'train-images-idx3-ubyte.gz').write_bytes(gzip.compress(images))
        (tmp_path / 'train-labels-idx1-ubyte').write_bytes(labels)
        (tmp_path / 't10k-images-idx3-ubyte').write_bytes(images)
        (tmp_path / 't10k-labels-idx1-ubyte.gz').write_bytes(gzip.compress(labels))
        train, validation = load_mnist_dir(tmp_path)
        assert (len(train), len(validation)) == (3, 3)
        assert validation.split == 'validation'

    @pytest.mark.parametrize('corrupt', [lambda raw: raw[:-12], lambda raw: b'not a gzip stream'])
    def test_broken_gzip(self, tmp_path, corrupt):
        dataset = Dataset(np.zeros((3, 2, 2, 1), dtype=np.float32), np.array([0, 1, 2]))
        images, labels = encode_idx(dataset)
        (tmp_path / 'i.gz').write_bytes(corrupt(gzip.compress(images)))
        (tmp_path / 'l').write_bytes(labels)
        with pytest.raises(FormatError):
            load_idx(tmp_path / 'i.gz', tmp_path / 'l')

    def test_mnist_dir_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_mnist_dir(tmp_path)


class TestMakeBatches:

    def _dataset(self, n):
        return Dataset(np.arange(n, dtype=np.float32).reshape(n, 1, 1, 1), np.arange(n))

    def test_partition_sizes(self):
        assert [len(b) for b in make_batches(self._dataset(5), 2, 0)] == [2, 2, 1]

    def test_deterministic(self):
        a = make_batches(self._dataset(9), 4, [3, 0])
        b = make_batches(self._dataset(9), 4, [3, 0])
        assert [x.labels.tolist() for x in a] == [x.labels.tolist() for x in b]

    def test_epoch_is_permutation(self):
        batches = make_batches(self._dataset(11), 3, 42)
        labels = np.concatenate([b.labels for b in batches])
        assert sorted(labels.tolist()) == list(range(11))

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            make_batches(self._dataset(0), 2, 0)

    def test_batch_size_must_be_positive(self):
        with pytest.raises(ValueError):
            make_batches(self._dataset(3), 0, 0)

    def test_stream_reshuffles_epochs(self):
        stream = batch_stream(self._dataset(6), 6, 1)
        first, second = next(stream), next(stream)
        np.testing.assert_array_equal(first.labels, epoch_order(6, [1, 0]))
        np.testing.assert_array_equal(second.labels, epoch_order(6, [1, 1]))


class TestSynthDataset:

    def test_deterministic(self):
        a, b = synth_dataset(50, 3, 7), synth_dataset(50, 3, 7)
        assert a.images.tobytes() == b.images.tobytes()
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_balanced_labels(self):
        counts = np.bincount(synth_dataset(101, 4, 0).labels, minlength=4)
        assert counts.max() - counts.min() <= 1

    def test_pixels_in_unit_range(self):
        dataset = synth_dataset(40, 2, 0)
        assert dataset.images.min() >= 0.0 and dataset.images.max() <= 1.0

    def test_n_below_classes(self):
        with pytest.raises(ValueError):
            synth_dataset(2, 3, 0)

    def test_dense_net_fits_two_blobs(self):
        dataset = synth_dataset(100, 2, 0)
        spec = NetworkSpec((Dense(64, 2), SoftmaxXent()), (8, 8, 1))
        params = init_params(spec, InitRule('xavier'), 0)
        state = make_state('sgd', len(params))
        stream = batch_stream(dataset, 10, 0)
        for step in range(1, 501):
            batch = next(stream)
            fwd = forward(spec, params, batch, mode='train', seed=step)
            grad, _ = backward(spec, params, batch, fwd)
            optimizer_step(params, grad, 0.1, state)
        logits = forward(spec, params, Batch(dataset.images, dataset.labels)).logits
        assert np.mean(logits.argmax(axis=1) == dataset.labels) > 0.95
