"""
Projected gradient descent in the L∞ ball.

δ ← Π_ε(δ + α·sgn(∇ℓ(clamp(x + δ)))), from a uniform random start; the model
only ever sees the pixel-clamped point clamp(x + δ). With keep_best the per-example iterate of highest loss over all steps and
restarts is returned (ties keep the earliest); scoring the last iterate of a
restart costs one extra forward pass.
"""
from typing import Optional

import numpy as np

from ..datasets.batch import LabeledBatch
from ..errors import ConfigurationError
from ..model import Classifier
from .base import Attack, AttackOutcome, check_epsilon, clamp_pixels, project_linf


def pgd(model: Classifier, batch: LabeledBatch, epsilon: float, alpha: float, steps: int,
        restarts: int = 1, rng: Optional[np.random.Generator] = None, keep_best: bool = True,
        random_start: bool = True) -> AttackOutcome:
    """
    Multi-step sign-gradient attack with projection.

    Args:
        model: classifier
        batch: clean images and labels
        epsilon: L∞ radius
        alpha: step size
        steps: iterations per restart (≥ 1)
        restarts: independent random starts (≥ 1)
        rng: generator for the random starts
        keep_best: keep the running max-loss iterate instead of the last one
        random_start: start uniformly in the ε-ball instead of at x

    Returns:
        AttackOutcome; counters are (restarts·(steps+1), restarts·steps) with
        keep_best and (steps, steps) without
    """
    epsilon = check_epsilon(epsilon)
    if steps < 1 or restarts < 1:
        raise ConfigurationError(f"PGD needs steps >= 1 and restarts >= 1, got {steps} and {restarts}")
    if restarts > 1 and not keep_best:
        raise ConfigurationError("PGD with several restarts must keep the best iterate")
    rng = rng or np.random.default_rng()
    x, y = batch.images, batch.labels
    n = len(y)
    per_example = (n,) + (1,) * (x.ndim - 1)

    best = x.copy()
    best_loss = np.full(n, -np.inf)
    forwards = backwards = 0

    def keep(candidate, losses):
        better = losses > best_loss
        best_loss[better] = losses[better]
        np.copyto(best, candidate, where=better.reshape(per_example))

    for _ in range(restarts):
        delta = rng.uniform(-epsilon, epsilon, size=x.shape) if random_start else np.zeros_like(x)
        for t in range(steps):
            adv = clamp_pixels(x + delta)
            grads = model.gradients(adv, y)
            forwards += 1
            backwards += 1
            if keep_best and t > 0:
                keep(adv, grads.losses)
            delta = project_linf(delta + alpha * np.sign(grads.input), epsilon)
        adv = clamp_pixels(x + delta)
        if keep_best:
            keep(adv, model.losses(adv, y))
            forwards += 1
        else:
            best = adv

    return AttackOutcome(adv_images=best, delta=best - x, forward_count=forwards, backward_count=backwards)


class PGDAttack(Attack):
    def perturb(self, model: Classifier, batch: LabeledBatch,
                rng: Optional[np.random.Generator] = None) -> AttackOutcome:
        spec = self.spec
        return pgd(model, batch, spec.epsilon, spec.alpha, spec.steps, spec.restarts, rng, spec.keep_best)
