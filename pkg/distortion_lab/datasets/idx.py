"""
IDX (MNIST-style) reader.

Images: big-endian magic 0x00000803, then count, rows, cols (u32 each) and
count·rows·cols unsigned bytes. Labels: magic 0x00000801, count, then count
unsigned bytes. Files ending in .gz are decompressed first.
"""
import gzip
import logging
import struct
import zlib
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from ..errors import FormatError
from .batch import LabeledBatch

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read(path: Path) -> bytes:
    if path.suffix == ".gz":
        try:
            return gzip.decompress(path.read_bytes())
        except (OSError, EOFError, zlib.error) as e:
            raise FormatError(f"Corrupt gzip stream: {e}", path=str(path)) from e
    return path.read_bytes()


def parse_idx(data: bytes, expected_magic: int, path: str = None) -> Tuple[Tuple[int, ...], np.ndarray]:
    """Return the dimension tuple and the raw unsigned bytes of an IDX payload."""
    if len(data) < 4:
        raise FormatError("Missing IDX magic number", path=path, offset=0)
    (magic,) = struct.unpack(">I", data[:4])
    if magic != expected_magic:
        raise FormatError(f"Bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}", path=path, offset=0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise FormatError(f"Truncated IDX header, expected {ndim} dimensions", path=path, offset=4)
    dims = struct.unpack(f">{ndim}I", data[4:header])
    count = int(np.prod(dims, dtype=np.int64)) if dims else 0
    if len(data) - header != count:
        raise FormatError(
            f"IDX payload has {len(data) - header} bytes, dimensions {dims} need {count}",
            path=path, offset=header)
    return tuple(int(d) for d in dims), np.frombuffer(data, dtype=np.uint8, offset=header)


def load_idx(images_path: Union[str, Path], labels_path: Union[str, Path],
             add_channel_axis: bool = False, n_classes: int = None) -> LabeledBatch:
    """
    Load an IDX image file and its label file.

    Args:
        images_path: IDX file with magic 0x00000803
        labels_path: IDX file with magic 0x00000801
        add_channel_axis: insert a singleton channel axis, giving (n, 1, rows, cols)
        n_classes: class count; defaults to max label + 1

    Returns:
        LabeledBatch with pixels byte/255
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    dims, pixels = parse_idx(_read(images_path), IMAGES_MAGIC, str(images_path))
    (n_labels,), labels = parse_idx(_read(labels_path), LABELS_MAGIC, str(labels_path))
    if dims[0] != n_labels:
        raise FormatError(f"{dims[0]} images but {n_labels} labels", path=str(labels_path), offset=4)
    images = pixels.reshape(dims).astype(np.float64) / 255.0
    if add_channel_axis:
        images = images[:, None]
    labels = labels.astype(np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 1
    elif labels.size and labels.max() >= n_classes:
        raise FormatError(f"Label {int(labels.max())} out of range for {n_classes} classes", path=str(labels_path))
    logger.info(f"Loaded {dims[0]} IDX images of shape {dims[1:]} from {images_path}")
    return LabeledBatch(images, labels, n_classes)
