"""
Robustness diagnostics: decision-boundary distortion, loss nonlinearity γ,
perturbation and gradient norms, and robust accuracy.

Every metric uses per-example gradients (the gradient of each example's own
loss), so results do not depend on how examples are grouped into batches.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .attacks import AttackSpec, build_attack
from .attacks.base import check_epsilon, clamp_pixels
from .datasets.batch import LabeledBatch
from .errors import ConfigurationError
from .model import Classifier

logger = logging.getLogger(__name__)


def fgsm_direction(model: Classifier, batch: LabeledBatch, epsilon: float):
    """ε·sgn(∇x ℓ) per example, plus the gradient pass it came from."""
    grads = model.gradients(batch.images, batch.labels, reduction="sum")
    return epsilon * np.sign(grads.input), grads


@dataclass
class DistortionEstimate:
    """Share of clean-and-endpoint-correct examples misclassified somewhere inside the segment."""

    d: Optional[float]
    n_S_N: int
    n_S_D_and_S_N: int
    samples_per_example: int
    in_S_N: np.ndarray
    distorted: np.ndarray

    @property
    def defined(self) -> bool:
        return self.d is not None

    def to_dict(self) -> Dict:
        return {
            "d": self.d,
            "n_S_N": self.n_S_N,
            "n_S_D_and_S_N": self.n_S_D_and_S_N,
            "samples_per_example": self.samples_per_example,
        }


def probe_scales(n_samples: int) -> List[float]:
    """Interior probe scales j/(n+1), j = 1..n; the grid for n is contained in the grid for 2n+1."""
    return [j / (n_samples + 1) for j in range(1, n_samples + 1)]


def estimate_distortion(model: Classifier, dataset: LabeledBatch, epsilon: float,
                        n_samples: int = 100) -> DistortionEstimate:
    """
    Estimate the distortion d along the FGSM direction.

    An example belongs to S_N when it is classified correctly at x and at
    clamp(x + δ) with δ = ε·sgn(∇x ℓ). It is distorted when some interior probe
    clamp(x + (j/(n+1))·δ) is misclassified.

    Args:
        model: classifier
        dataset: examples to test
        epsilon: L∞ radius
        n_samples: interior probes per example (≥ 1)

    Returns:
        DistortionEstimate; d is None when S_N is empty
    """
    if n_samples < 1:
        raise ConfigurationError(f"n_samples must be >= 1, got {n_samples}")
    epsilon = check_epsilon(epsilon)
    n = len(dataset)
    in_s_n = np.zeros(n, dtype=bool)
    distorted = np.zeros(n, dtype=bool)
    if n:
        x, y = dataset.images, dataset.labels
        direction, grads = fgsm_direction(model, dataset, epsilon)
        clean_ok = grads.logits.argmax(axis=1) == y
        end_ok = model.forward(clamp_pixels(x + direction)).argmax(axis=1) == y
        in_s_n = clean_ok & end_ok
        members = np.flatnonzero(in_s_n)
        if len(members):
            xm, dm, ym = x[members], direction[members], y[members]
            flipped = np.zeros(len(members), dtype=bool)
            for k in probe_scales(n_samples):
                flipped |= model.forward(clamp_pixels(xm + k * dm)).argmax(axis=1) != ym
            distorted[members] = flipped
    n_s_n = int(in_s_n.sum())
    n_both = int(distorted.sum())
    d = n_both / n_s_n if n_s_n else None
    if d is None:
        logger.debug("Distortion undefined: no example is correct at both ends of its segment")
    return DistortionEstimate(d, n_s_n, n_both, n_samples, in_s_n, distorted)


@dataclass
class GammaStats:
    per_example_gamma: np.ndarray
    mean_gamma: float
    fraction_negative: float

    def histogram(self, bins: int = 20, value_range: Optional[Tuple[float, float]] = None):
        """Counts and bin edges of the per-example γ values."""
        return np.histogram(self.per_example_gamma, bins=bins, range=value_range)

    def to_dict(self) -> Dict:
        return {"mean_gamma": self.mean_gamma, "fraction_negative": self.fraction_negative, "n": len(self.per_example_gamma)}


def gamma(model: Classifier, batch: LabeledBatch, epsilon: float) -> GammaStats:
    """
    Per-example nonlinearity γ = ℓ(x+δ) − ℓ(x) − ε‖∇x ℓ‖₁ with δ = ε·sgn(∇x ℓ).

    x + δ is not clamped to the pixel range, so γ vanishes for any loss that
    is affine in x.
    """
    epsilon = check_epsilon(epsilon)
    if len(batch) == 0:
        return GammaStats(np.zeros(0), 0.0, 0.0)
    direction, grads = fgsm_direction(model, batch, epsilon)
    shifted = model.losses(batch.images + direction, batch.labels)
    l1 = np.abs(grads.input).reshape(len(batch), -1).sum(axis=1)
    values = (shifted - grads.losses) - epsilon * l1
    return GammaStats(values, float(values.mean()), float(np.mean(values < 0)))


def perturbation_l1_mean(deltas: np.ndarray) -> float:
    """Mean per-pixel |δ|."""
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.size == 0:
        return 0.0
    return math.fsum(np.abs(deltas).ravel()) / deltas.size


def input_grad_l2(model: Classifier, batch: LabeledBatch) -> Tuple[float, float]:
    """Mean over examples of ‖∇x ℓ‖₂ and of ‖∇x ℓ‖₂²."""
    if len(batch) == 0:
        return 0.0, 0.0
    grads = model.gradients(batch.images, batch.labels, reduction="sum")
    squared = np.square(grads.input).reshape(len(batch), -1).sum(axis=1)
    return float(np.sqrt(squared).mean()), float(squared.mean())


def robust_accuracy(model: Classifier, dataset: LabeledBatch, attack: AttackSpec,
                    restrict_to_correct: bool = False, rng: Optional[np.random.Generator] = None) -> float:
    """
    Fraction of examples still classified correctly after the attack.

    Args:
        model: classifier
        dataset: clean examples
        attack: attack to run
        restrict_to_correct: only count examples the model gets right before the attack
        rng: generator for random starts

    Returns:
        Accuracy in [0, 1]; 0.0 when no example is counted
    """
    overall, on_correct, _ = _robust_counts(model, dataset, attack, rng, warn=restrict_to_correct)
    return on_correct if restrict_to_correct else overall


def _robust_counts(model, dataset, attack, rng, warn=True):
    if len(dataset) == 0:
        return 0.0, 0.0, 0
    y = dataset.labels
    outcome = build_attack(attack).perturb(model, dataset, rng)
    survived = model.forward(outcome.adv_images).argmax(axis=1) == y
    correct = model.forward(dataset.images).argmax(axis=1) == y
    overall = float(survived.mean())
    if not correct.any():
        if warn:
            logger.warning(f"No correctly classified examples left for {attack.label()}; reporting 0.0")
        return overall, 0.0, 0
    return overall, float(survived[correct].mean()), int(correct.sum())


@dataclass
class AccuracyRow:
    """One evaluation table row."""

    attack: str
    epsilon: float
    accuracy: float
    accuracy_on_correct: float
    n_correct: int

    def to_dict(self) -> Dict:
        return asdict(self)


def robust_accuracy_table(model: Classifier, dataset: LabeledBatch, attacks: Sequence[AttackSpec],
                          rng: Optional[np.random.Generator] = None) -> List[AccuracyRow]:
    """Clean accuracy followed by one row per attack, each measured on all and on clean-correct examples."""
    rng = rng or np.random.default_rng()
    n = len(dataset)
    clean = model.forward(dataset.images).argmax(axis=1) == dataset.labels if n else np.zeros(0, dtype=bool)
    clean_acc = float(clean.mean()) if n else 0.0
    rows = [AccuracyRow("Clean", 0.0, clean_acc, 1.0 if clean.any() else 0.0, int(clean.sum()))]
    for spec in attacks:
        overall, on_correct, counted = _robust_counts(model, dataset, spec, rng)
        rows.append(AccuracyRow(spec.label(), spec.epsilon, overall, on_correct, counted))
    return rows


def label_changes_along(model: Classifier, batch: LabeledBatch, epsilon: float, n_samples: int = 100) -> np.ndarray:
    """Number of distinct predicted labels per example on the FGSM segment, endpoints included."""
    if n_samples < 1:
        raise ConfigurationError(f"n_samples must be >= 1, got {n_samples}")
    if len(batch) == 0:
        return np.zeros(0, dtype=np.int64)
    direction, grads = fgsm_direction(model, batch, check_epsilon(epsilon))
    preds = [grads.logits.argmax(axis=1)]
    for k in probe_scales(n_samples) + [1.0]:
        preds.append(model.forward(clamp_pixels(batch.images + k * direction)).argmax(axis=1))
    stacked = np.stack(preds, axis=1)
    return np.array([len(np.unique(row)) for row in stacked], dtype=np.int64)
