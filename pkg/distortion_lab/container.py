"""
DLAB binary model container.

Layout (all integers little-endian):

    magic            4 bytes   b"DLAB"
    version          u32       1
    n_classes        u32
    input_ndim       u32
    input_shape      u32 × input_ndim
    n_layers         u32
    per layer        u8 kind code, then u32 fields
                       dense   (1): in_features, out_features
                       conv2d  (2): in_channels, out_channels, kernel, stride, pad
                       relu    (3): –
                       flatten (4): –
    has_momentum     u8        0 or 1
    tensors          f8 (little-endian) values of every parameter in
                     parameter order ("<layer>.weight" then "<layer>.bias"),
                     followed by the momentum buffers in the same order
                     when has_momentum is 1
"""
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .errors import FormatError
from .layers import Conv2d, Dense, Flatten, ReLU
from .model import Model, ModelSpec, ModelState

MAGIC = b"DLAB"
VERSION = 1

_CODES = {"dense": 1, "conv2d": 2, "relu": 3, "flatten": 4}
_FIELDS = {
    "dense": ("in_features", "out_features"),
    "conv2d": ("in_channels", "out_channels", "kernel", "stride", "pad"),
    "relu": (),
    "flatten": (),
}
_CLASSES = {1: Dense, 2: Conv2d, 3: ReLU, 4: Flatten}


def encode_model(model: Model, include_momentum: bool = True) -> bytes:
    spec = model.spec
    out = bytearray(MAGIC)
    out += struct.pack("<I", VERSION)
    out += struct.pack("<II", spec.n_classes, len(spec.input_shape))
    out += struct.pack(f"<{len(spec.input_shape)}I", *spec.input_shape)
    out += struct.pack("<I", len(spec.layers))
    for layer in spec.layers:
        fields = _FIELDS[layer.kind]
        out += struct.pack("<B", _CODES[layer.kind])
        if fields:
            out += struct.pack(f"<{len(fields)}I", *(getattr(layer, name) for name in fields))
    out += struct.pack("<B", 1 if include_momentum else 0)
    keys = list(spec.param_shapes())
    for key in keys:
        out += np.ascontiguousarray(model.state.params[key], dtype="<f8").tobytes()
    if include_momentum:
        for key in keys:
            out += np.ascontiguousarray(model.state.momentum_buffers[key], dtype="<f8").tobytes()
    return bytes(out)


def decode_model(data: bytes, path: str = None) -> Model:
    reader = _Reader(data, path)
    if reader.take(4) != MAGIC:
        raise FormatError("Not a DLAB container (bad magic)", path=path, offset=0)
    version = reader.unpack("<I")[0]
    if version != VERSION:
        raise FormatError(f"Unsupported DLAB version {version}", path=path, offset=4)
    n_classes, ndim = reader.unpack("<II")
    input_shape = reader.unpack(f"<{ndim}I") if ndim else ()
    (n_layers,) = reader.unpack("<I")
    layers = []
    for _ in range(n_layers):
        offset = reader.pos
        (code,) = reader.unpack("<B")
        cls = _CLASSES.get(code)
        if cls is None:
            raise FormatError(f"Unknown layer code {code}", path=path, offset=offset)
        fields = _FIELDS[cls.kind]
        values = reader.unpack(f"<{len(fields)}I") if fields else ()
        try:
            layers.append(cls(*values))
        except ValueError as e:
            raise FormatError(f"Invalid layer descriptor: {e}", path=path, offset=offset) from e
    (has_momentum,) = reader.unpack("<B")
    try:
        spec = ModelSpec(input_shape=tuple(input_shape), layers=tuple(layers), n_classes=n_classes)
    except ValueError as e:
        raise FormatError(f"Inconsistent architecture: {e}", path=path, offset=8) from e
    shapes = spec.param_shapes()
    params = {key: reader.floats(shape) for key, shape in shapes.items()}
    buffers = {key: reader.floats(shape) for key, shape in shapes.items()} if has_momentum else {}
    if reader.pos != len(data):
        raise FormatError(f"{len(data) - reader.pos} trailing bytes", path=path, offset=reader.pos)
    return Model(spec, ModelState(params=params, momentum_buffers=buffers))


def save_model(path: Union[str, Path], model: Model, include_momentum: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_model(model, include_momentum))
    return path


def load_model(path: Union[str, Path]) -> Model:
    path = Path(path)
    return decode_model(path.read_bytes(), str(path))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"Truncated container, needed {n} bytes", path=self.path, offset=self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
