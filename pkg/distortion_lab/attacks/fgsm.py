"""Fast gradient sign method: x' = clamp(x + ε·sgn(∇x ℓ))."""
from typing import Optional

import numpy as np

from ..datasets.batch import LabeledBatch
from ..model import Classifier
from .base import Attack, AttackOutcome, check_epsilon, clamp_pixels


def fgsm(model: Classifier, batch: LabeledBatch, epsilon: float) -> AttackOutcome:
    """
    One signed-gradient step of size ε from the clean image.

    Args:
        model: classifier
        batch: clean images and labels
        epsilon: L∞ radius

    Returns:
        AttackOutcome with one forward and one backward pass
    """
    epsilon = check_epsilon(epsilon)
    grads = model.gradients(batch.images, batch.labels)
    adv = clamp_pixels(batch.images + epsilon * np.sign(grads.input))
    return AttackOutcome(adv_images=adv, delta=adv - batch.images, forward_count=1, backward_count=1)


class FGSMAttack(Attack):
    def perturb(self, model: Classifier, batch: LabeledBatch,
                rng: Optional[np.random.Generator] = None) -> AttackOutcome:
        return fgsm(model, batch, self.spec.epsilon)
