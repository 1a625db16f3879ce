"""Seeded Gaussian-blob classification tasks squashed into [0, 1]."""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError
from .batch import LabeledBatch

logger = logging.getLogger(__name__)


@dataclass
class SyntheticSpec:
    """Isotropic Gaussian blobs, one per class."""

    means: List[List[float]]
    sigma: float
    n_per_class: int
    seed: int = 0
    image_shape: Optional[Tuple[int, ...]] = None
    n_classes: Optional[int] = None
    dims: Optional[int] = None

    def __post_init__(self):
        if not self.means:
            raise ConfigurationError("SyntheticSpec needs at least one class mean")
        self.means = [[float(v) for v in mean] for mean in self.means]
        if self.n_classes is not None and self.n_classes != len(self.means):
            raise ConfigurationError(f"n_classes={self.n_classes} but {len(self.means)} class means given")
        if self.dims is not None and any(len(mean) != self.dims for mean in self.means):
            raise ConfigurationError(f"Every class mean must have dims={self.dims} entries")
        self.n_classes = len(self.means)
        self.dims = len(self.means[0])
        if self.dims < 1 or any(len(mean) != self.dims for mean in self.means):
            raise ConfigurationError("Every class mean must have the same positive number of dimensions")
        if self.sigma < 0:
            raise ConfigurationError(f"sigma must be non-negative, got {self.sigma}")
        if self.n_per_class < 0:
            raise ConfigurationError(f"n_per_class must be non-negative, got {self.n_per_class}")
        if self.image_shape is not None:
            self.image_shape = tuple(int(d) for d in self.image_shape)
            if int(np.prod(self.image_shape)) != self.dims:
                raise ConfigurationError(f"image_shape {self.image_shape} does not hold {self.dims} dimensions")

    def to_dict(self) -> Dict:
        return {
            "kind": "synthetic",
            "means": self.means,
            "sigma": self.sigma,
            "n_per_class": self.n_per_class,
            "seed": self.seed,
            "image_shape": list(self.image_shape) if self.image_shape else None,
            "n_classes": self.n_classes,
            "dims": self.dims,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "SyntheticSpec":
        allowed = {"kind", "means", "sigma", "n_per_class", "seed", "image_shape", "n_classes", "dims"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigurationError(f"Unknown synthetic dataset keys: {', '.join(sorted(unknown))}")
        try:
            return cls(
                means=data["means"],
                sigma=float(data["sigma"]),
                n_per_class=int(data["n_per_class"]),
                seed=int(data.get("seed", 0)),
                image_shape=data.get("image_shape"),
                n_classes=data.get("n_classes"),
                dims=data.get("dims"),
            )
        except KeyError as e:
            raise ConfigurationError(f"Missing synthetic dataset key: {e.args[0]}") from e


def squash(features: np.ndarray) -> np.ndarray:
    """Per-dimension affine min–max map into [0, 1]; constant dimensions map to 0.5."""
    if features.size == 0:
        return features
    lo = features.min(axis=0)
    span = features.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (features - lo) / safe, 0.5)
    return np.clip(scaled, 0.0, 1.0)


def gen_gaussian_blobs(spec: SyntheticSpec) -> LabeledBatch:
    """
    Draw exactly n_per_class points around every class mean.

    Args:
        spec: blob means, spread, counts and seed

    Returns:
        LabeledBatch with features in [0, 1], shuffled deterministically by seed
    """
    rng = np.random.default_rng(spec.seed)
    means = np.asarray(spec.means, dtype=np.float64)
    n = spec.n_classes * spec.n_per_class
    labels = np.repeat(np.arange(spec.n_classes), spec.n_per_class)
    noise = rng.normal(0.0, 1.0, size=(n, spec.dims))
    features = squash(means[labels] + spec.sigma * noise)
    order = rng.permutation(n)
    features, labels = features[order], labels[order]
    shape = spec.image_shape or (spec.dims,)
    logger.debug(f"Generated {n} synthetic examples in {spec.n_classes} classes")
    return LabeledBatch(features.reshape((n, *shape)), labels, spec.n_classes)
