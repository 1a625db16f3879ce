"""Labeled image batches shared by every loader."""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import InputError


@dataclass
class LabeledBatch:
    """Images with values in [0, 1] (channel-first) and integer labels."""

    images: np.ndarray
    labels: np.ndarray
    n_classes: Optional[int] = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)

    def __len__(self) -> int:
        return len(self.labels)

    def validate(self, n_classes: Optional[int] = None) -> "LabeledBatch":
        """Check pixel range, label count and label range; returns self."""
        n_classes = n_classes if n_classes is not None else self.n_classes
        if self.images.shape[0] != len(self.labels):
            raise InputError(f"{self.images.shape[0]} images but {len(self.labels)} labels")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise InputError("Pixel values must lie in [0, 1]")
        if not np.all(np.isfinite(self.images)):
            raise InputError("Images contain non-finite values")
        if n_classes is not None and len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= n_classes):
            raise InputError(f"Labels must lie in [0, {n_classes})")
        return self

    @property
    def example_shape(self):
        return self.images.shape[1:]

    def subset(self, indices: Sequence[int]) -> "LabeledBatch":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledBatch(self.images[indices], self.labels[indices], self.n_classes)
