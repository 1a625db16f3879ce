"""
CIFAR-10 binary-version reader.

Each record is 3073 bytes: one label byte (0-9) followed by 1024 red, 1024
green and 1024 blue bytes of a row-major 32×32 image. Pixels are mapped to
byte/255 and kept channel-first, giving images of shape (n, 3, 32, 32).
"""
import logging
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from ..errors import FormatError
from .batch import LabeledBatch

logger = logging.getLogger(__name__)

RECORD_BYTES = 3073
IMAGE_SHAPE = (3, 32, 32)
N_CLASSES = 10


def parse_cifar10_bytes(data: bytes, path: str = None) -> LabeledBatch:
    """Decode the records of one CIFAR-10 .bin file."""
    remainder = len(data) % RECORD_BYTES
    if remainder:
        raise FormatError(
            f"Truncated CIFAR-10 file: {len(data)} bytes is not a multiple of {RECORD_BYTES}",
            path=path, offset=len(data) - remainder)
    records = np.frombuffer(data, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= N_CLASSES)
    if bad.size:
        index = int(bad[0])
        raise FormatError(f"Label {labels[index]} out of range 0-9", path=path, offset=index * RECORD_BYTES)
    images = records[:, 1:].reshape(-1, *IMAGE_SHAPE).astype(np.float64) / 255.0
    return LabeledBatch(images, labels, N_CLASSES)


def load_cifar10_bin(paths: Union[str, Path, Iterable[Union[str, Path]]]) -> LabeledBatch:
    """
    Load one or more CIFAR-10 .bin files in the given order.

    Args:
        paths: a path or an iterable of paths

    Returns:
        LabeledBatch of shape (n, 3, 32, 32)
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    batches = []
    for path in paths:
        path = Path(path)
        batches.append(parse_cifar10_bytes(path.read_bytes(), str(path)))
        logger.info(f"Loaded {len(batches[-1])} CIFAR-10 records from {path}")
    if not batches:
        return LabeledBatch(np.zeros((0, *IMAGE_SHAPE)), np.zeros(0, dtype=np.int64), N_CLASSES)
    return LabeledBatch(
        np.concatenate([b.images for b in batches]),
        np.concatenate([b.labels for b in batches]),
        N_CLASSES,
    )
