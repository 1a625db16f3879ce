"""
Shared types for L∞ attacks.

Every attack takes a classifier, a labeled batch and a seeded generator and
returns an AttackOutcome. Pixels are clamped to [0, 1] after every
perturbation and perturbations never leave the ε-ball.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional

import numpy as np

from ..datasets.batch import LabeledBatch
from ..errors import ConfigurationError
from ..model import Classifier


class AttackKind(str, Enum):
    FGSM = "fgsm"
    FAST = "fast"
    PGD = "pgd"
    CHECKPOINTED = "checkpointed"


@dataclass
class AttackSpec:
    """Which attack, with which radius, step size, steps, restarts and checkpoints."""

    kind: AttackKind
    epsilon: float
    alpha: Optional[float] = None
    steps: int = 1
    restarts: int = 1
    c: int = 3
    reference: str = "noisy"
    keep_best: bool = True

    def __post_init__(self):
        try:
            self.kind = AttackKind(self.kind)
        except ValueError:
            raise ConfigurationError(f"Unknown attack kind '{self.kind}'") from None
        self.epsilon = float(self.epsilon)
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ConfigurationError(f"epsilon must be a finite value >= 0, got {self.epsilon}")
        if self.alpha is None:
            self.alpha = self.epsilon if self.kind == AttackKind.FGSM else 1.25 * self.epsilon
        self.alpha = float(self.alpha)
        # alpha = 0 is allowed: the fast attack then reduces to its random start
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ConfigurationError(f"alpha must be non-negative, got {self.alpha}")
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {self.steps}")
        if self.restarts < 1:
            raise ConfigurationError(f"restarts must be >= 1, got {self.restarts}")
        if self.c < 1:
            raise ConfigurationError(f"c must be >= 1, got {self.c}")
        if self.reference not in ("noisy", "clean"):
            raise ConfigurationError(f"reference must be 'noisy' or 'clean', got '{self.reference}'")
        if self.kind == AttackKind.PGD and not self.keep_best and self.restarts > 1:
            raise ConfigurationError("PGD with several restarts must keep the best iterate")

    def label(self) -> str:
        if self.kind == AttackKind.PGD:
            return f"PGD-{self.steps}" + (f" ×{self.restarts}" if self.restarts > 1 else "")
        if self.kind == AttackKind.CHECKPOINTED:
            return f"Checkpointed(c={self.c})"
        return self.kind.value.upper() if self.kind == AttackKind.FGSM else "Fast"

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind.value,
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "steps": self.steps,
            "restarts": self.restarts,
            "c": self.c,
            "reference": self.reference,
            "keep_best": self.keep_best,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "AttackSpec":
        allowed = {"kind", "epsilon", "alpha", "steps", "restarts", "c", "reference", "keep_best"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigurationError(f"Unknown attack keys: {', '.join(sorted(unknown))}")
        if "kind" not in data or "epsilon" not in data:
            raise ConfigurationError("An attack needs at least 'kind' and 'epsilon'")
        return cls(**data)


@dataclass
class AttackOutcome:
    """Adversarial batch, its perturbation and the passes spent on it."""

    adv_images: np.ndarray
    delta: np.ndarray
    forward_count: int
    backward_count: int
    selected_k: np.ndarray = field(default=None)
    selected_j: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.selected_k is None:
            self.selected_k = np.ones(len(self.adv_images))

    def linf(self) -> np.ndarray:
        """Per-example ‖δ‖∞."""
        if len(self.delta) == 0:
            return np.zeros(0)
        return np.abs(self.delta).reshape(len(self.delta), -1).max(axis=1)


def project_linf(delta: np.ndarray, epsilon: float) -> np.ndarray:
    """Elementwise clip into [−ε, ε]."""
    return np.clip(delta, -epsilon, epsilon)


def clamp_pixels(x: np.ndarray) -> np.ndarray:
    """Elementwise clip into [0, 1]."""
    return np.clip(x, 0.0, 1.0)


def check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not np.isfinite(epsilon) or epsilon < 0:
        raise ConfigurationError(f"epsilon must be a finite value >= 0, got {epsilon}")
    return epsilon


class Attack:
    """Base class for attacks built from an AttackSpec."""

    def __init__(self, spec: AttackSpec):
        self.spec = spec

    def perturb(self, model: Classifier, batch: LabeledBatch,
                rng: Optional[np.random.Generator] = None) -> AttackOutcome:
        raise NotImplementedError
