import gzip
import os
import shutil
import struct
import tempfile
import unittest

import numpy as np

from distortion_lab.datasets import LabeledBatch, SyntheticSpec, gen_gaussian_blobs, load_cifar10_bin, load_idx
from distortion_lab.datasets.cifar10 import RECORD_BYTES, parse_cifar10_bytes
from distortion_lab.datasets.synthetic import squash
from distortion_lab.errors import ConfigurationError, FormatError, InputError


def _cifar_records(labels, seed=0):
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(len(labels), 3072), dtype=np.uint8)
    records = np.column_stack([np.asarray(labels, dtype=np.uint8), pixels])
    return records.tobytes(), pixels


def _idx_images(images):
    n, rows, cols = images.shape
    return struct.pack(">IIII", 0x00000803, n, rows, cols) + images.astype(np.uint8).tobytes()


def _idx_labels(labels):
    return struct.pack(">II", 0x00000801, len(labels)) + np.asarray(labels, dtype=np.uint8).tobytes()


class TestSynthetic(unittest.TestCase):
    def test_counts_and_range(self):
        spec = SyntheticSpec(means=[[0, 0], [1, 1], [0, 1]], sigma=0.2, n_per_class=30, seed=1)
        batch = gen_gaussian_blobs(spec)
        self.assertEqual(batch.images.shape, (90, 2))
        self.assertEqual(list(np.bincount(batch.labels)), [30, 30, 30])
        self.assertGreaterEqual(batch.images.min(), 0.0)
        self.assertLessEqual(batch.images.max(), 1.0)
        batch.validate()

    def test_seeded(self):
        spec = SyntheticSpec(means=[[0, 0], [1, 1]], sigma=0.1, n_per_class=10, seed=4)
        first, second = gen_gaussian_blobs(spec), gen_gaussian_blobs(spec)
        self.assertEqual(first.images.tobytes(), second.images.tobytes())
        other = gen_gaussian_blobs(SyntheticSpec(means=[[0, 0], [1, 1]], sigma=0.1, n_per_class=10, seed=5))
        self.assertNotEqual(first.images.tobytes(), other.images.tobytes())

    def test_image_shape(self):
        spec = SyntheticSpec(means=[[0.0] * 4, [1.0] * 4], sigma=0.1, n_per_class=3, image_shape=[1, 2, 2])
        self.assertEqual(gen_gaussian_blobs(spec).images.shape, (6, 1, 2, 2))
        with self.assertRaises(ConfigurationError):
            SyntheticSpec(means=[[0.0] * 4], sigma=0.1, n_per_class=3, image_shape=[3, 3])

    def test_invalid(self):
        with self.assertRaises(ConfigurationError):
            SyntheticSpec(means=[[0, 0], [1]], sigma=0.1, n_per_class=3)
        with self.assertRaises(ConfigurationError):
            SyntheticSpec(means=[[0, 0]], sigma=-1, n_per_class=3)
        with self.assertRaises(ConfigurationError):
            SyntheticSpec.from_dict({"means": [[0, 0]], "sigma": 0.1})

    def test_empty_classes(self):
        batch = gen_gaussian_blobs(SyntheticSpec(means=[[0, 0], [1, 1]], sigma=0.1, n_per_class=0))
        self.assertEqual(len(batch), 0)
        self.assertEqual(batch.images.shape, (0, 2))
        batch.validate()

    def test_hyperplane_oracle(self):
        """Blobs on either side of x0 + x1 = 1 are separated by that hand-set hyperplane."""
        spec = SyntheticSpec(means=[[0.2, 0.2], [0.8, 0.8]], sigma=0.05, n_per_class=500, seed=0)
        batch = gen_gaussian_blobs(spec)
        predicted = (batch.images.sum(axis=1) > 1.0).astype(np.int64)
        self.assertGreaterEqual(float(np.mean(predicted == batch.labels)), 0.99)

    def test_squash(self):
        out = squash(np.array([[2.0, 5.0], [4.0, 5.0], [3.0, 5.0]]))
        np.testing.assert_array_equal(out, [[0.0, 0.5], [1.0, 0.5], [0.5, 0.5]])


class TestLabeledBatch(unittest.TestCase):
    def test_validate(self):
        with self.assertRaises(InputError):
            LabeledBatch(np.array([[1.5]]), [0]).validate()
        with self.assertRaises(InputError):
            LabeledBatch(np.zeros((2, 1)), [0]).validate()
        with self.assertRaises(InputError):
            LabeledBatch(np.zeros((1, 1)), [3], 2).validate()

    def test_subset(self):
        batch = LabeledBatch(np.arange(4.0).reshape(4, 1) / 4, [0, 1, 0, 1], 2)
        part = batch.subset([3, 1])
        np.testing.assert_array_equal(part.labels, [1, 1])
        self.assertEqual(part.n_classes, 2)


class TestCifar10(unittest.TestCase):
    def setUp(self):
        self.test_dir = tempfile.mkdtemp(prefix="dlab_cifar_")

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_fixture(self):
        data, pixels = _cifar_records([3, 0, 9])
        path = os.path.join(self.test_dir, "data_batch_1.bin")
        with open(path, "wb") as f:
            f.write(data)
        batch = load_cifar10_bin(path)
        self.assertEqual(batch.images.shape, (3, 3, 32, 32))
        np.testing.assert_array_equal(batch.labels, [3, 0, 9])
        # channel-first: red plane of record 1 is its first 1024 pixel bytes
        np.testing.assert_array_equal(batch.images[1, 0].ravel(), pixels[1, :1024] / 255.0)
        np.testing.assert_array_equal(batch.images[2, 2].ravel(), pixels[2, 2048:] / 255.0)
        restored = np.round(batch.images.reshape(3, -1) * 255).astype(np.uint8)
        self.assertEqual(restored.tobytes(), pixels.tobytes())

    def test_several_files_in_order(self):
        paths = []
        for i, labels in enumerate(([1, 2], [7])):
            path = os.path.join(self.test_dir, f"part{i}.bin")
            with open(path, "wb") as f:
                f.write(_cifar_records(labels, seed=i)[0])
            paths.append(path)
        np.testing.assert_array_equal(load_cifar10_bin(paths).labels, [1, 2, 7])

    def test_single_white_record(self):
        path = os.path.join(self.test_dir, "white.bin")
        with open(path, "wb") as f:
            f.write(bytes([3]) + bytes([255]) * 3072)
        batch = load_cifar10_bin(path)
        self.assertEqual(len(batch), 1)
        self.assertEqual(batch.labels.tolist(), [3])
        np.testing.assert_array_equal(batch.images, np.ones((1, 3, 32, 32)))

    def test_rejects_record_without_label(self):
        with self.assertRaises(FormatError) as ctx:
            parse_cifar10_bytes(bytes(3072))
        self.assertEqual(ctx.exception.offset, 0)

    def test_truncated(self):
        data, _ = _cifar_records([1, 2])
        with self.assertRaises(FormatError) as ctx:
            parse_cifar10_bytes(data[:-5], "x.bin")
        self.assertEqual(ctx.exception.offset, RECORD_BYTES)

    def test_label_out_of_range(self):
        data, _ = _cifar_records([1, 12])
        with self.assertRaises(FormatError) as ctx:
            parse_cifar10_bytes(data)
        self.assertEqual(ctx.exception.offset, RECORD_BYTES)


class TestIdx(unittest.TestCase):
    def setUp(self):
        self.test_dir = tempfile.mkdtemp(prefix="dlab_idx_")
        rng = np.random.default_rng(0)
        self.images = rng.integers(0, 256, size=(5, 4, 3))
        self.labels = [0, 4, 2, 9, 1]

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def _write(self, name, data, compress=False):
        path = os.path.join(self.test_dir, name)
        with open(path, "wb") as f:
            f.write(gzip.compress(data) if compress else data)
        return path

    def test_fixture(self):
        images = self._write("images-idx3-ubyte", _idx_images(self.images))
        labels = self._write("labels-idx1-ubyte", _idx_labels(self.labels))
        batch = load_idx(images, labels)
        self.assertEqual(batch.images.shape, (5, 4, 3))
        self.assertEqual(batch.n_classes, 10)
        np.testing.assert_array_equal(batch.labels, self.labels)
        restored = np.round(batch.images * 255).astype(np.uint8)
        self.assertEqual(restored.tobytes(), self.images.astype(np.uint8).tobytes())

    def test_single_pixel(self):
        images = self._write("one-images", _idx_images(np.array([[[128]]])))
        labels = self._write("one-labels", _idx_labels([7]))
        batch = load_idx(images, labels)
        self.assertEqual(batch.images.shape, (1, 1, 1))
        self.assertEqual(batch.images[0, 0, 0], 128 / 255)
        self.assertEqual(batch.labels.tolist(), [7])

    def test_gzip_and_channel_axis(self):
        images = self._write("images.gz", _idx_images(self.images), compress=True)
        labels = self._write("labels.gz", _idx_labels(self.labels), compress=True)
        batch = load_idx(images, labels, add_channel_axis=True)
        self.assertEqual(batch.images.shape, (5, 1, 4, 3))

    def test_bad_magic(self):
        images = self._write("images", _idx_labels(self.labels))
        labels = self._write("labels", _idx_labels(self.labels))
        with self.assertRaises(FormatError) as ctx:
            load_idx(images, labels)
        self.assertEqual(ctx.exception.offset, 0)

    def test_count_mismatch(self):
        images = self._write("images", _idx_images(self.images))
        labels = self._write("labels", _idx_labels(self.labels[:4]))
        with self.assertRaises(FormatError):
            load_idx(images, labels)

    def test_truncated_payload(self):
        images = self._write("images", _idx_images(self.images)[:-1])
        labels = self._write("labels", _idx_labels(self.labels))
        with self.assertRaises(FormatError):
            load_idx(images, labels)

    def test_corrupt_gzip(self):
        images = self._write("images.gz", b"not gzip at all")
        labels = self._write("labels", _idx_labels(self.labels))
        with self.assertRaises(FormatError):
            load_idx(images, labels)


class TestLoaderRobustness(unittest.TestCase):
    """Mutated and truncated files either load or raise FormatError, never anything else."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp(prefix="dlab_fuzz_")
        self.rng = np.random.default_rng(2024)

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def _mutations(self, data, count):
        for _ in range(count):
            buf = bytearray(data)
            choice = self.rng.integers(3)
            if choice == 0 and buf:
                for i in self.rng.integers(0, len(buf), size=self.rng.integers(1, 5)):
                    buf[i] = int(self.rng.integers(256))
            elif choice == 1:
                buf = buf[:int(self.rng.integers(0, len(buf) + 1))]
            else:
                buf += bytes(self.rng.integers(0, 256, size=int(self.rng.integers(1, 16)), dtype=np.uint8))
            yield bytes(buf)

    def test_cifar10(self):
        data, _ = _cifar_records([1, 5])
        for mutated in self._mutations(data, 300):
            try:
                parse_cifar10_bytes(mutated).validate()
            except FormatError:
                pass

    def test_idx(self):
        images = _idx_images(np.random.default_rng(0).integers(0, 256, size=(3, 2, 2)))
        labels = _idx_labels([0, 1, 2])
        labels_path = os.path.join(self.test_dir, "labels")
        with open(labels_path, "wb") as f:
            f.write(labels)
        for i, mutated in enumerate(self._mutations(images, 300)):
            path = os.path.join(self.test_dir, f"images-{i}")
            with open(path, "wb") as f:
                f.write(mutated)
            try:
                load_idx(path, labels_path).validate()
            except FormatError:
                pass

    def test_gzip_idx(self):
        labels = gzip.compress(_idx_labels([0, 1, 2, 3]))
        images_path = os.path.join(self.test_dir, "images")
        with open(images_path, "wb") as f:
            f.write(_idx_images(np.zeros((4, 2, 2), dtype=np.uint8)))
        for i, mutated in enumerate(self._mutations(labels, 300)):
            path = os.path.join(self.test_dir, f"labels-{i}.gz")
            with open(path, "wb") as f:
                f.write(mutated)
            try:
                load_idx(images_path, path).validate()
            except FormatError:
                pass


if __name__ == '__main__':
    unittest.main()
