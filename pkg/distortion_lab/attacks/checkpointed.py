"""
Checkpointed single-step attack used by stable single-step training.

After the random-start step δ, the predictions at x + (j/c)·δ for j = 1..c are
checked. The training input is x + k*·δ with k* = j/c for the smallest index
j ∈ {0..c} whose prediction is wrong (j = 0 is the prediction made while
computing the gradient), or k* = 1 when every checkpoint is correct.
"""
from typing import Optional

import numpy as np

from ..datasets.batch import LabeledBatch
from ..errors import ConfigurationError
from ..model import Classifier
from .base import Attack, AttackOutcome, clamp_pixels
from .fast import random_start_step


def checkpointed_single_step(model: Classifier, batch: LabeledBatch, epsilon: float, alpha: float,
                             c: int, rng: np.random.Generator, reference: str = "noisy") -> AttackOutcome:
    """
    Random-start single step with per-example magnitude selection.

    Args:
        model: classifier
        batch: clean images and labels
        epsilon: L∞ radius
        alpha: step size of the signed-gradient step
        c: number of checkpoints (≥ 1)
        rng: generator for the random start
        reference: "noisy" takes ŷ₀ from the gradient pass at x + η (c+1
            forwards); "clean" spends one more forward pass on x itself

    Returns:
        AttackOutcome whose selected_k holds k* and selected_j its numerator
    """
    if c < 1:
        raise ConfigurationError(f"c must be >= 1, got {c}")
    if reference not in ("noisy", "clean"):
        raise ConfigurationError(f"reference must be 'noisy' or 'clean', got '{reference}'")
    x, y = batch.images, batch.labels
    direction, grads = random_start_step(model, batch, epsilon, alpha, rng)
    forwards = 1
    if reference == "noisy":
        wrong = grads.logits.argmax(axis=1) != y
    else:
        wrong = model.forward(x).argmax(axis=1) != y
        forwards += 1

    selected = np.full(len(y), c, dtype=np.int64)
    selected[wrong] = 0
    decided = wrong.copy()
    for j in range(1, c + 1):
        probe = clamp_pixels(x + (j / c) * direction)
        wrong = model.forward(probe).argmax(axis=1) != y
        forwards += 1
        newly = wrong & ~decided
        selected[newly] = j
        decided |= newly

    k = selected / c
    adv = clamp_pixels(x + k.reshape((-1,) + (1,) * (x.ndim - 1)) * direction)
    return AttackOutcome(
        adv_images=adv,
        delta=adv - x,
        forward_count=forwards,
        backward_count=1,
        selected_k=k,
        selected_j=selected,
    )


class CheckpointedAttack(Attack):
    def perturb(self, model: Classifier, batch: LabeledBatch,
                rng: Optional[np.random.Generator] = None) -> AttackOutcome:
        spec = self.spec
        return checkpointed_single_step(model, batch, spec.epsilon, spec.alpha, spec.c,
                                        rng or np.random.default_rng(), spec.reference)
