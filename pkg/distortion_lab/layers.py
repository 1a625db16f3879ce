"""
Layer kinds of the minimal classifier.

Each layer knows its output shape, the shapes of its parameters, and how to run
a forward pass (returning a cache) and the matching reverse-mode pass. Shapes
are per-example; batches add a leading axis. Images are channel-first.
"""
from dataclasses import dataclass
from typing import ClassVar, Dict, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError

Shape = Tuple[int, ...]
Params = Dict[str, np.ndarray]


class Layer:
    """Base class for layers; parameter-free by default."""

    kind: ClassVar[str] = ""

    def output_shape(self, input_shape: Shape) -> Shape:
        raise NotImplementedError

    def param_shapes(self) -> Dict[str, Shape]:
        return {}

    def fan_in_out(self) -> Tuple[int, int]:
        raise NotImplementedError

    def forward(self, x: np.ndarray, params: Params):
        raise NotImplementedError

    def backward(self, dy: np.ndarray, cache, params: Params):
        raise NotImplementedError

    def to_dict(self) -> Dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class Dense(Layer):
    """Fully connected layer, y = x Wᵀ + b with W of shape (out, in)."""

    in_features: int
    out_features: int
    kind: ClassVar[str] = "dense"

    def __post_init__(self):
        if self.in_features < 1 or self.out_features < 1:
            raise ConfigurationError(f"Dense dimensions must be positive, got ({self.in_features}, {self.out_features})")

    def output_shape(self, input_shape: Shape) -> Shape:
        if tuple(input_shape) != (self.in_features,):
            raise ConfigurationError(f"Dense({self.in_features}, {self.out_features}) cannot take input of shape {tuple(input_shape)}")
        return (self.out_features,)

    def param_shapes(self) -> Dict[str, Shape]:
        return {"weight": (self.out_features, self.in_features), "bias": (self.out_features,)}

    def fan_in_out(self) -> Tuple[int, int]:
        return self.in_features, self.out_features

    def forward(self, x, params):
        return x @ params["weight"].T + params["bias"], x

    def backward(self, dy, cache, params):
        x = cache
        grads = {"weight": dy.T @ x, "bias": dy.sum(axis=0)}
        return dy @ params["weight"], grads

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "in_features": self.in_features, "out_features": self.out_features}


@dataclass(frozen=True)
class Conv2d(Layer):
    """2-D cross-correlation over channel-first (C, H, W) inputs."""

    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    pad: int = 0
    kind: ClassVar[str] = "conv2d"

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel, self.stride) < 1 or self.pad < 0:
            raise ConfigurationError(f"Invalid Conv2d parameters: {self.to_dict()}")

    def output_shape(self, input_shape: Shape) -> Shape:
        if len(input_shape) != 3 or input_shape[0] != self.in_channels:
            raise ConfigurationError(f"Conv2d expects ({self.in_channels}, H, W) input, got {tuple(input_shape)}")
        _, h, w = input_shape
        oh = (h + 2 * self.pad - self.kernel) // self.stride + 1
        ow = (w + 2 * self.pad - self.kernel) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ConfigurationError(f"Conv2d kernel {self.kernel} does not fit input {tuple(input_shape)}")
        return (self.out_channels, oh, ow)

    def param_shapes(self) -> Dict[str, Shape]:
        k = self.kernel
        return {"weight": (self.out_channels, self.in_channels, k, k), "bias": (self.out_channels,)}

    def fan_in_out(self) -> Tuple[int, int]:
        area = self.kernel * self.kernel
        return self.in_channels * area, self.out_channels * area

    def _windows(self, x):
        p, k, s = self.pad, self.kernel, self.stride
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        # (N, C, OH, OW, k, k)
        return sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s], xp.shape

    def forward(self, x, params):
        windows, padded_shape = self._windows(x)
        out = np.einsum("nchwij,ocij->nohw", windows, params["weight"], optimize=True)
        out += params["bias"][None, :, None, None]
        return out, (windows, padded_shape)

    def backward(self, dy, cache, params):
        windows, padded_shape = cache
        k, s, p = self.kernel, self.stride, self.pad
        grads = {
            "weight": np.einsum("nchwij,nohw->ocij", windows, dy, optimize=True),
            "bias": dy.sum(axis=(0, 2, 3)),
        }
        dwin = np.einsum("nohw,ocij->nchwij", dy, params["weight"], optimize=True)
        oh, ow = dy.shape[2], dy.shape[3]
        dxp = np.zeros(padded_shape, dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + s * oh:s, j:j + s * ow:s] += dwin[..., i, j]
        if p:
            dxp = dxp[:, :, p:-p, p:-p]
        return dxp, grads

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "stride": self.stride,
            "pad": self.pad,
        }


@dataclass(frozen=True)
class ReLU(Layer):
    """Elementwise max(0, x); the subgradient at 0 is 0."""

    kind: ClassVar[str] = "relu"

    def output_shape(self, input_shape: Shape) -> Shape:
        return tuple(input_shape)

    def forward(self, x, params):
        mask = x > 0
        return np.where(mask, x, 0.0).astype(x.dtype, copy=False), mask

    def backward(self, dy, cache, params):
        return np.where(cache, dy, 0.0).astype(dy.dtype, copy=False), {}


@dataclass(frozen=True)
class Flatten(Layer):
    """Collapse the per-example shape into one axis."""

    kind: ClassVar[str] = "flatten"

    def output_shape(self, input_shape: Shape) -> Shape:
        return (int(np.prod(input_shape)),)

    def forward(self, x, params):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache, params):
        return dy.reshape(cache), {}


LAYER_KINDS = {cls.kind: cls for cls in (Dense, Conv2d, ReLU, Flatten)}


def layer_from_dict(data) -> Layer:
    """Build a layer from `{"kind": ..., **fields}` or a bare kind string."""
    if isinstance(data, str):
        data = {"kind": data}
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigurationError(f"Layer description must name a kind, got {data!r}")
    fields = dict(data)
    kind = fields.pop("kind")
    cls = LAYER_KINDS.get(kind)
    if cls is None:
        raise ConfigurationError(f"Unknown layer kind '{kind}', expected one of {', '.join(LAYER_KINDS)}")
    try:
        return cls(**fields)
    except TypeError as e:
        raise ConfigurationError(f"Invalid fields for layer '{kind}': {e}") from e
