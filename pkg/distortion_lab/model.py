"""
Minimal differentiable classifier.

A ModelSpec is an ordered list of layers; a ModelState holds the parameter
values and SGD momentum buffers; a Model binds the two and provides forward
passes, softmax cross-entropy and exact reverse-mode gradients with respect to
both the input pixels and the parameters.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Protocol, Tuple

import numpy as np

from .errors import ConfigurationError, InputError
from .layers import Layer, Shape, layer_from_dict

logger = logging.getLogger(__name__)

PRECISIONS = {"float64": np.float64, "float32": np.float32}


@dataclass(frozen=True)
class ModelSpec:
    """Layer-list architecture for inputs of shape `input_shape`."""

    input_shape: Shape
    layers: Tuple[Layer, ...]
    n_classes: int

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self.validate()

    def validate(self) -> None:
        """Check that adjacent layer shapes compose and the output has n_classes logits."""
        if self.n_classes < 1:
            raise ConfigurationError(f"n_classes must be positive, got {self.n_classes}")
        if not self.input_shape or min(self.input_shape) < 1:
            raise ConfigurationError(f"input_shape must have positive dimensions, got {self.input_shape}")
        shape = self.input_shape
        for index, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ConfigurationError as e:
                raise ConfigurationError(f"Layer {index} ({layer.kind}): {e}") from e
        if shape != (self.n_classes,):
            raise ConfigurationError(f"Final layer produces shape {shape}, expected ({self.n_classes},)")

    def param_shapes(self) -> Dict[str, Shape]:
        """Parameter shapes keyed "<layer index>.<name>" in layer order."""
        shapes = {}
        for index, layer in enumerate(self.layers):
            for name, shape in layer.param_shapes().items():
                shapes[f"{index}.{name}"] = shape
        return shapes

    def n_params(self) -> int:
        return int(sum(np.prod(s) for s in self.param_shapes().values()))

    def to_dict(self) -> Dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [layer.to_dict() for layer in self.layers],
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ModelSpec":
        unknown = set(data) - {"input_shape", "layers", "n_classes"}
        if unknown:
            raise ConfigurationError(f"Unknown model keys: {', '.join(sorted(unknown))}")
        try:
            return cls(
                input_shape=tuple(data["input_shape"]),
                layers=tuple(layer_from_dict(item) for item in data["layers"]),
                n_classes=int(data["n_classes"]),
            )
        except KeyError as e:
            raise ConfigurationError(f"Missing model key: {e.args[0]}") from e


@dataclass
class ModelState:
    """Parameter values and momentum buffers with identical shapes."""

    params: Dict[str, np.ndarray]
    momentum_buffers: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.momentum_buffers:
            self.momentum_buffers = {k: np.zeros_like(v) for k, v in self.params.items()}
        for key, value in self.params.items():
            buffer = self.momentum_buffers.get(key)
            if buffer is None or buffer.shape != value.shape:
                raise ConfigurationError(f"Momentum buffer for '{key}' does not mirror its parameter shape")

    def copy(self) -> "ModelState":
        return ModelState(
            params={k: v.copy() for k, v in self.params.items()},
            momentum_buffers={k: v.copy() for k, v in self.momentum_buffers.items()},
        )


def init_state(spec: ModelSpec, rng: np.random.Generator, precision: str = "float64") -> ModelState:
    """Uniform ±sqrt(6 / (fan_in + fan_out)) weights, zero biases, zero momentum."""
    dtype = _dtype(precision)
    params = {}
    for index, layer in enumerate(spec.layers):
        shapes = layer.param_shapes()
        if not shapes:
            continue
        fan_in, fan_out = layer.fan_in_out()
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"{index}.weight"] = rng.uniform(-limit, limit, size=shapes["weight"]).astype(dtype)
        params[f"{index}.bias"] = np.zeros(shapes["bias"], dtype=dtype)
    return ModelState(params=params)


def _dtype(precision: str):
    try:
        return PRECISIONS[precision]
    except KeyError:
        raise ConfigurationError(f"Unknown precision '{precision}', expected float64 or float32") from None


def check_finite(array: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise InputError(f"{name} contains non-finite values")
    return array


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray, reduction: str = "mean"):
    """
    Softmax cross-entropy computed through a stable log-sum-exp.

    Args:
        logits: (n, n_classes) array
        labels: n integer class indices
        reduction: "mean" (scalar), "sum" (scalar) or "none" (per-example array)

    Returns:
        The reduced loss
    """
    labels = _check_labels(labels, logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    losses = log_norm - shifted[np.arange(len(labels)), labels]
    if reduction == "none":
        return losses
    if reduction == "sum":
        return float(losses.sum())
    if reduction == "mean":
        return float(losses.mean()) if len(losses) else 0.0
    raise ConfigurationError(f"Unknown reduction '{reduction}'")


def _check_labels(labels, logits: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or len(labels) != logits.shape[0]:
        raise InputError(f"Expected {logits.shape[0]} labels, got shape {labels.shape}")
    if labels.size and (not np.issubdtype(labels.dtype, np.integer)
                        or labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise InputError(f"Labels must be integers in [0, {logits.shape[1]})")
    return labels.astype(np.int64, copy=False)


@dataclass
class Gradients:
    """Result of one forward and one backward pass."""

    logits: np.ndarray
    loss: float
    losses: np.ndarray
    input: Optional[np.ndarray] = None
    params: Optional[Dict[str, np.ndarray]] = None


class Classifier(Protocol):
    """What attacks and metrics need from a model."""

    def forward(self, images: np.ndarray) -> np.ndarray: ...

    def losses(self, images: np.ndarray, labels: np.ndarray) -> np.ndarray: ...

    def gradients(self, images: np.ndarray, labels: np.ndarray, reduction: str = "mean",
                  wrt_params: bool = False) -> Gradients: ...


class Model:
    """A ModelSpec bound to a ModelState, counting the passes it executes."""

    def __init__(self, spec: ModelSpec, state: ModelState):
        self.spec = spec
        self.state = state
        expected = spec.param_shapes()
        actual = {k: v.shape for k, v in state.params.items()}
        if expected != actual:
            raise ConfigurationError(f"Parameter shapes {actual} do not match the architecture {expected}")
        self.forward_count = 0
        self.backward_count = 0

    @classmethod
    def initialize(cls, spec: ModelSpec, rng: np.random.Generator, precision: str = "float64") -> "Model":
        return cls(spec, init_state(spec, rng, precision))

    @property
    def dtype(self):
        for value in self.state.params.values():
            return value.dtype
        return np.float64

    def _layer_params(self, index: int, layer: Layer) -> Dict[str, np.ndarray]:
        return {name: self.state.params[f"{index}.{name}"] for name in layer.param_shapes()}

    def _prepare(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=self.dtype)
        if images.shape[1:] != self.spec.input_shape:
            raise ConfigurationError(
                f"Batch of per-example shape {images.shape[1:]} does not match model input {self.spec.input_shape}")
        return images

    def _run(self, images: np.ndarray, keep_caches: bool):
        x = self._prepare(images)
        caches = []
        for index, layer in enumerate(self.spec.layers):
            x, cache = layer.forward(x, self._layer_params(index, layer))
            if keep_caches:
                caches.append(cache)
        self.forward_count += 1
        return check_finite(x, "logits"), caches

    def forward(self, images: np.ndarray) -> np.ndarray:
        """Logits of shape (n, n_classes)."""
        logits, _ = self._run(images, keep_caches=False)
        return logits

    def predict(self, images: np.ndarray) -> np.ndarray:
        return self.forward(images).argmax(axis=1)

    def gradients(self, images: np.ndarray, labels: np.ndarray, reduction: str = "mean",
                  wrt_params: bool = False) -> Gradients:
        """
        One forward and one backward pass of the reduced loss.

        Args:
            images: batch of inputs
            labels: integer labels
            reduction: "mean" for the batch-mean loss; "sum" gives per-example
                input gradients
            wrt_params: also return parameter gradients

        Returns:
            Gradients with logits, loss, input gradient and optional parameter gradients
        """
        logits, caches = self._run(images, keep_caches=True)
        labels = _check_labels(labels, logits)
        n = logits.shape[0]
        if reduction not in ("mean", "sum"):
            raise ConfigurationError(f"Gradients need a mean or sum reduction, got '{reduction}'")
        losses = softmax_cross_entropy(logits, labels, reduction="none")
        loss = float(losses.sum()) if reduction == "sum" else (float(losses.mean()) if n else 0.0)
        dlogits = softmax(logits)
        dlogits[np.arange(n), labels] -= 1.0
        if reduction == "mean" and n:
            dlogits /= n

        grad = dlogits
        param_grads: Dict[str, np.ndarray] = {}
        for index in range(len(self.spec.layers) - 1, -1, -1):
            layer = self.spec.layers[index]
            grad, layer_grads = layer.backward(grad, caches[index], self._layer_params(index, layer))
            for name, value in layer_grads.items():
                param_grads[f"{index}.{name}"] = check_finite(value, f"gradient of {index}.{name}")
        self.backward_count += 1
        return Gradients(
            logits=logits,
            loss=loss,
            losses=losses,
            input=check_finite(grad, "input gradient"),
            params={key: param_grads[key] for key in self.spec.param_shapes()} if wrt_params else None,
        )

    def input_gradient(self, images: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Gradient of the batch-mean loss with respect to the input pixels."""
        return self.gradients(images, labels).input

    def param_gradients(self, images: np.ndarray, labels: np.ndarray) -> Dict[str, np.ndarray]:
        """Gradient of the batch-mean loss with respect to every parameter."""
        return self.gradients(images, labels, wrt_params=True).params

    def loss(self, images: np.ndarray, labels: np.ndarray) -> float:
        return softmax_cross_entropy(self.forward(images), labels)

    def losses(self, images: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Per-example loss from one forward pass."""
        return softmax_cross_entropy(self.forward(images), labels, reduction="none")


def build_model(spec_data: Dict, rng: np.random.Generator, precision: str = "float64") -> Model:
    spec = ModelSpec.from_dict(spec_data)
    logger.debug(f"Initialising model with {spec.n_params()} parameters")
    return Model.initialize(spec, rng, precision)

