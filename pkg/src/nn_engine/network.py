"""Declarative network architectures and their learnable parameters."""

from __future__ import annotations

import hashlib
import math
from collections.abc import Iterator
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import numpy.typing as npt

from .errors import ShapeMismatchError, UnknownNetworkError

Tensor = npt.NDArray[np.floating]

MNIST_INPUT_SHAPE = (1, 28, 28)
MNIST_CLASSES = 10


class LayerKind(str, Enum):
    CONV = "Conv"
    MAXPOOL = "MaxPool"
    DENSE = "Dense"
    RELU = "ReLU"
    TANH = "Tanh"
    DROPOUT = "Dropout"
    FLATTEN = "Flatten"
    SOFTMAX = "Softmax"


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a feed-forward network.

    Only the fields relevant to ``kind`` are meaningful: ``channels``,
    ``kernel``, ``stride`` and ``padding`` for Conv, ``pool`` for MaxPool,
    ``units`` for Dense and ``rate`` for Dropout.
    """

    kind: LayerKind
    channels: int = 0
    kernel: tuple[int, int] = (0, 0)
    stride: int = 1
    padding: int = 0
    pool: int = 0
    units: int = 0
    rate: float = 0.0

    @property
    def has_params(self) -> bool:
        return self.kind in (LayerKind.CONV, LayerKind.DENSE)

    def describe(self) -> str:
        if self.kind is LayerKind.CONV:
            kh, kw = self.kernel
            return f"Conv({self.channels},{kh},{kw})"
        if self.kind is LayerKind.MAXPOOL:
            return f"MaxPool({self.pool},{self.pool})"
        if self.kind is LayerKind.DENSE:
            return f"Dense({self.units})"
        if self.kind is LayerKind.DROPOUT:
            return f"Dropout({self.rate})"
        return self.kind.value


def conv(channels: int, kh: int, kw: int, *, stride: int = 1, padding: int = 0) -> LayerSpec:
    return LayerSpec(LayerKind.CONV, channels=channels, kernel=(kh, kw), stride=stride, padding=padding)


def max_pool(size: int) -> LayerSpec:
    return LayerSpec(LayerKind.MAXPOOL, pool=size)


def dense(units: int) -> LayerSpec:
    return LayerSpec(LayerKind.DENSE, units=units)


def dropout(rate: float) -> LayerSpec:
    return LayerSpec(LayerKind.DROPOUT, rate=rate)


def relu() -> LayerSpec:
    return LayerSpec(LayerKind.RELU)


def tanh() -> LayerSpec:
    return LayerSpec(LayerKind.TANH)


def flatten() -> LayerSpec:
    return LayerSpec(LayerKind.FLATTEN)


def softmax() -> LayerSpec:
    return LayerSpec(LayerKind.SOFTMAX)


@dataclass(frozen=True)
class NetworkSpec:
    """A fixed architecture: ordered layers over a per-sample input shape."""

    name: str
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...] = MNIST_INPUT_SHAPE
    classes: int = MNIST_CLASSES

    def __post_init__(self) -> None:
        self.layer_shapes()

    def layer_shapes(self) -> list[tuple[int, ...]]:
        """Per-sample output shape of every layer, validating the composition."""
        shapes: list[tuple[int, ...]] = []
        shape = tuple(self.input_shape)
        last_dense = None
        for index, layer in enumerate(self.layers):
            if layer.kind is LayerKind.SOFTMAX and index != len(self.layers) - 1:
                raise ShapeMismatchError(f"{self.name}: Softmax must be the final layer (found at {index})")
            shape = _output_shape(self.name, index, layer, shape)
            if layer.kind is LayerKind.DENSE:
                last_dense = layer.units
            shapes.append(shape)
        if last_dense != self.classes:
            raise ShapeMismatchError(
                f"{self.name}: final Dense width {last_dense} does not match class count {self.classes}"
            )
        return shapes

    def param_shapes(self) -> dict[int, tuple[tuple[int, ...], tuple[int, ...]]]:
        """Weight and bias shapes keyed by layer index."""
        result: dict[int, tuple[tuple[int, ...], tuple[int, ...]]] = {}
        shape = tuple(self.input_shape)
        for index, (layer, out_shape) in enumerate(zip(self.layers, self.layer_shapes())):
            if layer.kind is LayerKind.CONV:
                kh, kw = layer.kernel
                result[index] = ((layer.channels, shape[0], kh, kw), (layer.channels,))
            elif layer.kind is LayerKind.DENSE:
                result[index] = ((shape[0], layer.units), (layer.units,))
            shape = out_shape
        return result

    def activation_after(self, index: int) -> LayerKind | None:
        """The first non-dropout layer following ``index``."""
        for layer in self.layers[index + 1 :]:
            if layer.kind is not LayerKind.DROPOUT:
                return layer.kind
        return None


def _output_shape(name: str, index: int, layer: LayerSpec, shape: tuple[int, ...]) -> tuple[int, ...]:
    kind = layer.kind
    if kind in (LayerKind.CONV, LayerKind.MAXPOOL) and len(shape) != 3:
        raise ShapeMismatchError(f"{name}: layer {index} {layer.describe()} needs (C,H,W) input, got {shape}")
    if kind is LayerKind.CONV:
        kh, kw = layer.kernel
        channels, height, width = shape
        out_h = (height + 2 * layer.padding - kh) // layer.stride + 1
        out_w = (width + 2 * layer.padding - kw) // layer.stride + 1
        out = (layer.channels, out_h, out_w)
    elif kind is LayerKind.MAXPOOL:
        channels, height, width = shape
        out = (channels, height // layer.pool, width // layer.pool)
    elif kind is LayerKind.DENSE:
        if len(shape) != 1:
            raise ShapeMismatchError(f"{name}: layer {index} Dense needs flat input, got {shape}")
        out = (layer.units,)
    elif kind is LayerKind.FLATTEN:
        out = (math.prod(shape),)
    else:
        out = shape
    if any(dim <= 0 for dim in out):
        raise ShapeMismatchError(f"{name}: layer {index} {layer.describe()} produces empty shape {out}")
    return out


# Canonical LeNet-5 dimensions; padding 2 makes 28x28 inputs behave as 32x32.
LENET = NetworkSpec(
    name="lenet",
    layers=(
        conv(6, 5, 5, padding=2), relu(), max_pool(2),
        conv(16, 5, 5), relu(), max_pool(2),
        flatten(),
        dense(120), relu(),
        dense(84), relu(),
        dense(10), softmax(),
    ),
)

NET_A = NetworkSpec(
    name="netA",
    layers=(
        conv(64, 5, 5), relu(),
        conv(64, 5, 5), relu(),
        dropout(0.25),
        flatten(),
        dense(128), relu(),
        dropout(0.5),
        dense(10), softmax(),
    ),
)

# Strides follow the original ensemble setup: 28 -> 14 -> 5 -> 1.
NET_B = NetworkSpec(
    name="netB",
    layers=(
        dropout(0.2),
        conv(64, 8, 8, stride=2, padding=3), relu(),
        conv(128, 6, 6, stride=2), relu(),
        conv(128, 5, 5), relu(),
        dropout(0.5),
        flatten(),
        dense(10), softmax(),
    ),
)

NET_C = NetworkSpec(
    name="netC",
    layers=(
        conv(128, 3, 3), tanh(), max_pool(2),
        conv(64, 3, 3), tanh(), max_pool(2),
        flatten(),
        dense(128), relu(),
        dense(10), softmax(),
    ),
)

NET_D = NetworkSpec(
    name="netD",
    layers=(
        flatten(),
        dense(300), relu(), dropout(0.5),
        dense(300), relu(), dropout(0.5),
        dense(300), relu(), dropout(0.5),
        dense(300), relu(), dropout(0.5),
        dense(10), softmax(),
    ),
)

BUILTIN_SPECS: dict[str, NetworkSpec] = {spec.name: spec for spec in (LENET, NET_A, NET_B, NET_C, NET_D)}


def get_spec(name: str) -> NetworkSpec:
    try:
        return BUILTIN_SPECS[name]
    except KeyError:
        raise UnknownNetworkError(
            f"unknown network {name!r}; expected one of {sorted(BUILTIN_SPECS)}"
        ) from None


@dataclass
class LayerParams:
    weight: Tensor
    bias: Tensor


@dataclass
class Parameters:
    """Learnable tensors keyed by the index of their layer in the spec."""

    layers: dict[int, LayerParams] = field(default_factory=dict)

    def __getitem__(self, index: int) -> LayerParams:
        return self.layers[index]

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.layers))

    def __len__(self) -> int:
        return len(self.layers)

    def items(self) -> list[tuple[int, LayerParams]]:
        return [(index, self.layers[index]) for index in self]

    @property
    def dtype(self) -> np.dtype:
        first = next(iter(self.layers.values()), None)
        return np.dtype(np.float32) if first is None else first.weight.dtype

    def copy(self) -> Parameters:
        return Parameters({i: LayerParams(p.weight.copy(), p.bias.copy()) for i, p in self.layers.items()})

    def zeros_like(self) -> Parameters:
        return Parameters(
            {i: LayerParams(np.zeros_like(p.weight), np.zeros_like(p.bias)) for i, p in self.layers.items()}
        )

    def astype(self, dtype: npt.DTypeLike) -> Parameters:
        return Parameters(
            {i: LayerParams(p.weight.astype(dtype), p.bias.astype(dtype)) for i, p in self.layers.items()}
        )

    def digest(self) -> str:
        """SHA-256 over every tensor in layer order; equal digests mean equal bits."""
        hasher = hashlib.sha256()
        for index, layer in self.items():
            hasher.update(str(index).encode())
            hasher.update(np.ascontiguousarray(layer.weight).tobytes())
            hasher.update(np.ascontiguousarray(layer.bias).tobytes())
        return hasher.hexdigest()

    def check_congruent(self, spec: NetworkSpec) -> None:
        expected = spec.param_shapes()
        if set(expected) != set(self.layers):
            raise ShapeMismatchError(
                f"{spec.name}: parameterised layers {sorted(expected)} but got {sorted(self.layers)}"
            )
        for index, (w_shape, b_shape) in expected.items():
            layer = self.layers[index]
            if layer.weight.shape != w_shape or layer.bias.shape != b_shape:
                raise ShapeMismatchError(
                    f"{spec.name}: layer {index} expects weight {w_shape} bias {b_shape}, "
                    f"got {layer.weight.shape} {layer.bias.shape}"
                )


def init_parameters(spec: NetworkSpec, seed: int, *, dtype: npt.DTypeLike = np.float32) -> Parameters:
    """He-uniform weights ahead of ReLU, Xavier-uniform otherwise; zero biases."""
    rng = np.random.default_rng(seed)
    params = Parameters()
    for index, (w_shape, b_shape) in spec.param_shapes().items():
        if len(w_shape) == 4:
            receptive = w_shape[2] * w_shape[3]
            fan_in, fan_out = w_shape[1] * receptive, w_shape[0] * receptive
        else:
            fan_in, fan_out = w_shape
        if spec.activation_after(index) is LayerKind.RELU:
            limit = math.sqrt(6.0 / fan_in)
        else:
            limit = math.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=w_shape).astype(dtype)
        params.layers[index] = LayerParams(weight, np.zeros(b_shape, dtype=dtype))
    return params
