"""SGD with classical momentum and weight decay folded into the gradient."""
from typing import Dict

import numpy as np

from .errors import ConfigurationError
from .model import ModelState


def sgd_step(state: ModelState, grads: Dict[str, np.ndarray], lr: float,
             momentum: float = 0.0, weight_decay: float = 0.0) -> ModelState:
    """
    Update parameters in place and return the state.

    v ← momentum·v + (g + weight_decay·θ);  θ ← θ − lr·v

    Args:
        state: parameters and momentum buffers
        grads: gradients keyed like state.params
        lr: learning rate
        momentum: momentum coefficient
        weight_decay: L2 coefficient applied to every parameter

    Returns:
        The updated state
    """
    if set(grads) != set(state.params):
        raise ConfigurationError(f"Gradient keys {sorted(grads)} do not match parameters {sorted(state.params)}")
    for key, theta in state.params.items():
        g = grads[key]
        if g.shape != theta.shape:
            raise ConfigurationError(f"Gradient for '{key}' has shape {g.shape}, expected {theta.shape}")
        v = state.momentum_buffers[key]
        v *= momentum
        v += g + weight_decay * theta
        theta -= lr * v
    return state
