"""
Loss surfaces around one example.

Cell (i, j) of a grid evaluates the model at clamp(x + a_i·v1 + b_j·v2),
where v1 is an adversarial direction and v2 a random one. Grid coordinates are
lo + (hi − lo)·i/(resolution − 1), so a [0, 1] grid at resolution n+2 hits the
distortion probe scales j/(n+1) exactly.

Export format (CSV, UTF-8, "\\n" line endings): header "a,b,loss,pred,correct",
then one row per cell, a outer and b inner, floats written with 17 significant
digits and `correct` written as 1 or 0.
"""
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Tuple, Union

import numpy as np

from .attacks.base import check_epsilon, clamp_pixels
from .attacks.fast import random_start_step
from .datasets.batch import LabeledBatch
from .errors import FormatError, InputError
from .model import Classifier

logger = logging.getLogger(__name__)

HEADER = ["a", "b", "loss", "pred", "correct"]


@dataclass
class SurfaceGrid:
    anchor_index: Optional[int]
    v1: Optional[np.ndarray]
    v2: Optional[np.ndarray]
    a_values: np.ndarray
    b_values: np.ndarray
    loss: np.ndarray
    pred: np.ndarray
    correct: np.ndarray

    @property
    def resolution(self) -> int:
        return len(self.a_values)

    @property
    def a_range(self) -> Tuple[float, float]:
        return float(self.a_values[0]), float(self.a_values[-1])

    @property
    def b_range(self) -> Tuple[float, float]:
        return float(self.b_values[0]), float(self.b_values[-1])

    def cells(self) -> Iterator[Tuple[float, float, float, int, bool]]:
        """(a, b, loss, pred, correct) in row-major order, a outer."""
        for i, a in enumerate(self.a_values):
            for j, b in enumerate(self.b_values):
                yield float(a), float(b), float(self.loss[i, j]), int(self.pred[i, j]), bool(self.correct[i, j])

    def b_index(self, b: float = 0.0) -> int:
        """Index of the grid column whose b coordinate equals `b` exactly."""
        matches = np.flatnonzero(self.b_values == b)
        if not len(matches):
            raise InputError(f"No grid column at b={b}")
        return int(matches[0])


def grid_values(lo: float, hi: float, resolution: int) -> np.ndarray:
    return np.array([lo + (hi - lo) * (i / (resolution - 1)) for i in range(resolution)])


def random_direction(shape, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Per-pixel Uniform(−ε, ε) direction."""
    epsilon = check_epsilon(epsilon)
    if epsilon == 0:
        return np.zeros(shape)
    return rng.uniform(-epsilon, epsilon, size=shape)


def adversarial_direction(model: Classifier, example: LabeledBatch, source, epsilon: float,
                          rng: np.random.Generator, alpha: Optional[float] = None) -> np.ndarray:
    """
    v1 for one example.

    Args:
        model: classifier
        example: batch holding exactly one example
        source: "fgsm" (ε·sgn(∇x ℓ)), "fast" (the clipped random-start step) or a supplied δ
        epsilon: L∞ radius
        rng: generator for the fast attack's random start
        alpha: fast-attack step size, 1.25ε by default

    Returns:
        Direction with the per-example shape
    """
    if isinstance(source, str):
        if source == "fgsm":
            grads = model.gradients(example.images, example.labels, reduction="sum")
            return epsilon * np.sign(grads.input[0])
        if source == "fast":
            alpha = 1.25 * epsilon if alpha is None else alpha
            direction, _ = random_start_step(model, example, epsilon, alpha, rng)
            return direction[0]
        raise InputError(f"Unknown v1 source '{source}', expected fgsm, fast or an array")
    direction = np.asarray(source, dtype=np.float64)
    if direction.shape != example.example_shape:
        raise InputError(f"Supplied direction has shape {direction.shape}, expected {example.example_shape}")
    return direction


def sample_surface(model: Classifier, dataset: LabeledBatch, anchor_index: int, v1_source, rng: np.random.Generator,
                   epsilon: float, a_range: Tuple[float, float] = (0.0, 1.0),
                   b_range: Tuple[float, float] = (0.0, 1.0), resolution: int = 21,
                   symmetric: bool = False, alpha: Optional[float] = None) -> SurfaceGrid:
    """
    Evaluate loss and prediction on a resolution × resolution grid around one example.

    Args:
        model: classifier
        dataset: examples; the grid is anchored at dataset[anchor_index]
        anchor_index: which example
        v1_source: "fgsm", "fast" or a supplied perturbation
        rng: seeded generator for v2 and for the fast attack
        epsilon: L∞ radius of the attack and of v2
        a_range: range along v1, in multiples of v1
        b_range: range along v2, in multiples of v2
        resolution: grid points per axis (≥ 2)
        symmetric: use [−1, 1] on both axes instead of the given ranges
        alpha: step size for the fast v1 source

    Returns:
        SurfaceGrid
    """
    if resolution < 2:
        raise InputError(f"resolution must be >= 2, got {resolution}")
    if not 0 <= anchor_index < len(dataset):
        raise InputError(f"anchor_index {anchor_index} outside a dataset of {len(dataset)} examples")
    epsilon = check_epsilon(epsilon)
    if symmetric:
        a_range, b_range = (-1.0, 1.0), (-1.0, 1.0)
    example = dataset.subset([anchor_index])
    v1 = adversarial_direction(model, example, v1_source, epsilon, rng, alpha)
    if not np.any(v1):
        raise InputError(f"Adversarial direction for example {anchor_index} is zero")
    v2 = random_direction(v1.shape, epsilon, rng)

    a_values = grid_values(*a_range, resolution)
    b_values = grid_values(*b_range, resolution)
    x = example.images[0]
    points = np.stack([clamp_pixels(x + a * v1 + b * v2) for a in a_values for b in b_values])
    labels = np.full(len(points), example.labels[0])
    shape = (resolution, resolution)
    pred = model.forward(points).argmax(axis=1)
    return SurfaceGrid(
        anchor_index=anchor_index,
        v1=v1,
        v2=v2,
        a_values=a_values,
        b_values=b_values,
        loss=model.losses(points, labels).reshape(shape),
        pred=pred.reshape(shape),
        correct=(pred == labels).reshape(shape),
    )


def export_grid(grid: SurfaceGrid, path: Union[str, Path]) -> Path:
    if grid.resolution < 2 or len(grid.b_values) < 2:
        raise InputError(f"A surface grid needs at least 2 points per axis, got {grid.resolution}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(HEADER)
        for a, b, loss, pred, correct in grid.cells():
            writer.writerow([f"{a:.17g}", f"{b:.17g}", f"{loss:.17g}", pred, 1 if correct else 0])
    logger.info(f"Wrote {grid.resolution}x{len(grid.b_values)} surface to {path}")
    return path


def read_grid(path: Union[str, Path]) -> SurfaceGrid:
    """Read an exported grid; directions are not stored, so v1 and v2 are None."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != HEADER:
        raise FormatError("Missing surface header", path=str(path), line=1)
    cells = rows[1:]
    resolution = math.isqrt(len(cells))
    if resolution < 2 or resolution * resolution != len(cells):
        raise FormatError(f"{len(cells)} cells do not form a square grid", path=str(path), line=len(rows))
    try:
        a = np.array([float(r[0]) for r in cells]).reshape(resolution, resolution)
        b = np.array([float(r[1]) for r in cells]).reshape(resolution, resolution)
        loss = np.array([float(r[2]) for r in cells]).reshape(resolution, resolution)
        pred = np.array([int(r[3]) for r in cells]).reshape(resolution, resolution)
        correct = np.array([r[4] == "1" for r in cells]).reshape(resolution, resolution)
    except (ValueError, IndexError) as e:
        raise FormatError(f"Malformed surface row: {e}", path=str(path)) from e
    return SurfaceGrid(None, None, None, a[:, 0], b[0, :], loss, pred, correct)
