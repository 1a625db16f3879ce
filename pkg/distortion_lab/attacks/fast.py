"""
Single-step attack with a uniform random start ("fast" adversarial training).

η ~ U(−ε, ε) per pixel, δ = clip_[−ε, ε](η + α·sgn(∇η ℓ(x + η))), x' = clamp(x + δ).
The gradient is taken at the pixel-clamped start point.
"""
from typing import Optional, Tuple

import numpy as np

from ..datasets.batch import LabeledBatch
from ..model import Classifier, Gradients
from .base import Attack, AttackOutcome, check_epsilon, clamp_pixels, project_linf


def random_start_step(model: Classifier, batch: LabeledBatch, epsilon: float, alpha: float,
                      rng: np.random.Generator) -> Tuple[np.ndarray, Gradients]:
    """Return the clipped direction δ and the gradient pass taken at x + η."""
    epsilon = check_epsilon(epsilon)
    eta = rng.uniform(-epsilon, epsilon, size=batch.images.shape)
    grads = model.gradients(clamp_pixels(batch.images + eta), batch.labels)
    return project_linf(eta + alpha * np.sign(grads.input), epsilon), grads


def fast_single_step(model: Classifier, batch: LabeledBatch, epsilon: float, alpha: float,
                     rng: np.random.Generator) -> AttackOutcome:
    direction, _ = random_start_step(model, batch, epsilon, alpha, rng)
    adv = clamp_pixels(batch.images + direction)
    return AttackOutcome(adv_images=adv, delta=adv - batch.images, forward_count=1, backward_count=1)


class FastAttack(Attack):
    def perturb(self, model: Classifier, batch: LabeledBatch,
                rng: Optional[np.random.Generator] = None) -> AttackOutcome:
        return fast_single_step(model, batch, self.spec.epsilon, self.spec.alpha, rng or np.random.default_rng())
