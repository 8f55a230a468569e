"""Small CNNs composed from the operator set, with named conv layers.

A network is an ordered list of layers validated at construction so that
consecutive shapes compose. Conv layers are addressable by their position
among conv layers (0, 1, ...) for regularization, statistics, and pruning.
"""

from __future__ import annotations

import copy as _copy
from dataclasses import dataclass

import numpy as np

from . import ops
from .ops import Parameter

__all__ = [
    "LayerSpec",
    "Network",
    "build_network",
    "conv_spec",
    "dense_spec",
    "desk_architecture",
    "flatten_spec",
    "maxpool_spec",
    "relu_spec",
]

_KINDS = ("conv", "relu", "maxpool", "flatten", "dense")


@dataclass
class LayerSpec:
    """One layer of the architecture: a kind plus its kind-specific extents."""

    kind: str
    out_channels: int | None = None
    kernel: int | None = None
    stride: int | None = None
    pad: int | None = None
    window: int | None = None
    out_features: int | None = None

    def validate(self, index: int) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"layer {index}: unknown kind {self.kind!r}")
        if self.kind == "conv":
            if not (self.out_channels and self.out_channels >= 1):
                raise ValueError(f"layer {index}: conv needs out_channels >= 1")
            if not (self.kernel and self.kernel >= 1):
                raise ValueError(f"layer {index}: conv needs kernel >= 1")
            if self.stride is None or self.stride < 1:
                raise ValueError(f"layer {index}: conv needs stride >= 1")
            if self.pad is None or self.pad < 0:
                raise ValueError(f"layer {index}: conv needs pad >= 0")
        elif self.kind == "maxpool":
            if not (self.window and self.window >= 1):
                raise ValueError(f"layer {index}: maxpool needs window >= 1")
            if self.stride is None or self.stride < 1:
                raise ValueError(f"layer {index}: maxpool needs stride >= 1")
        elif self.kind == "dense":
            if not (self.out_features and self.out_features >= 1):
                raise ValueError(f"layer {index}: dense needs out_features >= 1")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for key in ("out_channels", "kernel", "stride", "pad", "window", "out_features"):
            v = getattr(self, key)
            if v is not None:
                d[key] = int(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        known = {"kind", "out_channels", "kernel", "stride", "pad", "window", "out_features"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"layer spec has unknown fields {sorted(extra)}")
        return cls(**d)


def conv_spec(out_channels: int, kernel: int, stride: int = 1, pad: int = 0) -> LayerSpec:
    return LayerSpec("conv", out_channels=out_channels, kernel=kernel, stride=stride, pad=pad)


def relu_spec() -> LayerSpec:
    return LayerSpec("relu")


def maxpool_spec(window: int, stride: int) -> LayerSpec:
    return LayerSpec("maxpool", window=window, stride=stride)


def flatten_spec() -> LayerSpec:
    return LayerSpec("flatten")


def dense_spec(out_features: int) -> LayerSpec:
    return LayerSpec("dense", out_features=out_features)


def desk_architecture(class_count: int) -> list[LayerSpec]:
    """The default 2-conv architecture: 8@3x3 and 16@3x3, each relu+pool2."""
    return [
        conv_spec(8, 3, stride=1, pad=1),
        relu_spec(),
        maxpool_spec(2, 2),
        conv_spec(16, 3, stride=1, pad=1),
        relu_spec(),
        maxpool_spec(2, 2),
        flatten_spec(),
        dense_spec(class_count),
    ]


class _ConvLayer:
    def __init__(self, weights: np.ndarray, bias: np.ndarray, stride: int, pad: int):
        self.weights = Parameter(weights)
        self.bias = Parameter(bias)
        self.stride = stride
        self.pad = pad
        self._cache = None

    def parameters(self):
        return [self.weights, self.bias]

    def forward(self, x: np.ndarray, cache: bool) -> np.ndarray:
        kernel = self.weights.value.shape[2]
        cols = ops._window_cols(ops._pad_spatial(x, self.pad), kernel, self.stride)
        n = x.shape[0]
        c_out = self.weights.value.shape[0]
        h_out = ops.conv_output_extent(x.shape[2], kernel, self.stride, self.pad)
        w_out = ops.conv_output_extent(x.shape[3], kernel, self.stride, self.pad)
        w_flat = self.weights.value.reshape(c_out, -1)
        out = cols @ w_flat.T + self.bias.value
        out = np.ascontiguousarray(out.transpose(0, 2, 1).reshape(n, c_out, h_out, w_out))
        if cache:
            self._cache = (x, cols)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("conv backward called before forward")
        x, cols = self._cache
        grad_x, grad_w, grad_b = ops.conv2d_backward(
            x, self.weights.value, grad_out, self.stride, self.pad, cols=cols
        )
        self.weights.grad += grad_w
        self.bias.grad += grad_b
        return grad_x


class _ReluLayer:
    def __init__(self):
        self._cache = None

    def parameters(self):
        return []

    def forward(self, x: np.ndarray, cache: bool) -> np.ndarray:
        if cache:
            self._cache = x
        return ops.relu(x)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("relu backward called before forward")
        return ops.relu_backward(self._cache, grad_out)


class _MaxPoolLayer:
    def __init__(self, window: int, stride: int):
        self.window = window
        self.stride = stride
        self._cache = None

    def parameters(self):
        return []

    def forward(self, x: np.ndarray, cache: bool) -> np.ndarray:
        out, argmax = ops.maxpool2d(x, self.window, self.stride, return_argmax=True)
        if cache:
            self._cache = (x, argmax)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("maxpool backward called before forward")
        x, argmax = self._cache
        return ops.maxpool2d_backward(x, self.window, self.stride, grad_out, argmax=argmax)


class _FlattenLayer:
    def __init__(self):
        self._cache = None

    def parameters(self):
        return []

    def forward(self, x: np.ndarray, cache: bool) -> np.ndarray:
        if cache:
            self._cache = x.shape
        return np.ascontiguousarray(x.reshape(x.shape[0], -1))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("flatten backward called before forward")
        return grad_out.reshape(self._cache)


class _DenseLayer:
    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        self.weights = Parameter(weights)
        self.bias = Parameter(bias)
        self._cache = None

    def parameters(self):
        return [self.weights, self.bias]

    def forward(self, x: np.ndarray, cache: bool) -> np.ndarray:
        if cache:
            self._cache = x
        return ops.dense(x, self.weights.value, self.bias.value)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("dense backward called before forward")
        x = self._cache
        grad_x, grad_w, grad_b = ops.dense_backward(x, self.weights.value, grad_out)
        self.weights.grad += grad_w
        self.bias.grad += grad_b
        return grad_x


class Network:
    """Ordered layer stack over a fixed (C, H, W) input shape.

    Immutable during forward; training and pruning mutate parameters in
    place and require exclusive access.
    """

    def __init__(self, specs: list[LayerSpec], layers: list, input_shape: tuple[int, int, int],
                 class_count: int):
        self.specs = specs
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.class_count = class_count
        self.conv_positions = [i for i, s in enumerate(specs) if s.kind == "conv"]

    @property
    def conv_layer_count(self) -> int:
        return len(self.conv_positions)

    def conv_layer(self, index: int) -> _ConvLayer:
        """The conv layer object for conv index ``index`` (0-based)."""
        if not 0 <= index < len(self.conv_positions):
            raise ValueError(
                f"conv layer index {index} outside [0, {len(self.conv_positions)})"
            )
        return self.layers[self.conv_positions[index]]

    def parameters(self) -> list[Parameter]:
        params: list[Parameter] = []
        for layer in self.layers:
            params.extend(layer.parameters())
        return params

    def reset_grads(self) -> None:
        for p in self.parameters():
            p.reset_grad()

    def _check_batch(self, x: np.ndarray) -> None:
        if x.ndim != 4:
            raise ValueError(f"batch must be (N, C, H, W), got ndim={x.ndim}")
        if tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(
                f"batch shape {tuple(x.shape[1:])} != network input shape {self.input_shape}"
            )

    def forward(self, x: np.ndarray, *, cache: bool = False,
                pre_activation: bool = False) -> tuple[np.ndarray, list[np.ndarray]]:
        """Run the stack, returning logits and per-conv-layer activation maps.

        Maps are taken after the relu that immediately follows each conv
        (``pre_activation=True`` captures the raw conv output instead).
        """
        self._check_batch(x)
        maps: list[np.ndarray] = []
        pending: int | None = None
        out = x
        for i, (spec, layer) in enumerate(zip(self.specs, self.layers)):
            out = layer.forward(out, cache)
            if spec.kind == "conv":
                maps.append(out)
                pending = None if pre_activation else len(maps) - 1
            elif spec.kind == "relu" and pending is not None:
                maps[pending] = out
                pending = None
            else:
                pending = None
        return out, maps

    def backward(self, grad_logits: np.ndarray) -> None:
        """Accumulate parameter gradients from an upstream logits gradient."""
        grad = grad_logits
        for layer in reversed(self.layers):
            grad = layer.backward(grad)

    def copy(self, dtype=None) -> "Network":
        """Deep copy, optionally casting parameters to ``dtype``."""
        net = build_network(
            [_copy.deepcopy(s) for s in self.specs],
            self.input_shape,
            self.class_count,
            seed=0,
            dtype=dtype if dtype is not None else self.parameters()[0].value.dtype,
        )
        for dst, src in zip(net.parameters(), self.parameters()):
            dst.value[...] = src.value.astype(dst.value.dtype)
        return net


def _init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
                  dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def build_network(specs: list[LayerSpec], input_shape: tuple[int, int, int],
                  class_count: int, seed: int, dtype=np.float32) -> Network:
    """Validate shape composition and initialize parameters from ``seed``.

    Conv and dense weights use uniform(-sqrt(6/fan_in), sqrt(6/fan_in));
    biases start at zero. Identical arguments give bit-identical networks.
    """
    if len(input_shape) != 3:
        raise ValueError(f"input_shape must be (C, H, W), got {input_shape}")
    if not specs:
        raise ValueError("architecture has no layers")
    for i, spec in enumerate(specs):
        spec.validate(i)
    if specs[-1].kind != "dense":
        raise ValueError(f"layer {len(specs) - 1}: architecture must end in a dense layer")
    if specs[-1].out_features != class_count:
        raise ValueError(
            f"layer {len(specs) - 1}: final dense out_features "
            f"{specs[-1].out_features} != class count {class_count}"
        )

    rng = np.random.default_rng(seed)
    layers: list = []
    shape: tuple[int, ...] = tuple(input_shape)  # (C, H, W) or (F,) after flatten
    for i, spec in enumerate(specs):
        if spec.kind == "conv":
            if len(shape) != 3:
                raise ValueError(f"layer {i}: conv requires a (C, H, W) input, got {shape}")
            c, h, w = shape
            if spec.kernel > h + 2 * spec.pad or spec.kernel > w + 2 * spec.pad:
                raise ValueError(
                    f"layer {i}: kernel {spec.kernel} exceeds padded extent "
                    f"of input {h}x{w}"
                )
            fan_in = c * spec.kernel * spec.kernel
            weights = _init_uniform(
                rng, (spec.out_channels, c, spec.kernel, spec.kernel), fan_in, dtype
            )
            layers.append(_ConvLayer(weights, np.zeros(spec.out_channels, dtype=dtype),
                                     spec.stride, spec.pad))
            shape = (
                spec.out_channels,
                ops.conv_output_extent(h, spec.kernel, spec.stride, spec.pad),
                ops.conv_output_extent(w, spec.kernel, spec.stride, spec.pad),
            )
        elif spec.kind == "relu":
            layers.append(_ReluLayer())
        elif spec.kind == "maxpool":
            if len(shape) != 3:
                raise ValueError(f"layer {i}: maxpool requires a (C, H, W) input, got {shape}")
            c, h, w = shape
            if spec.window > h or spec.window > w:
                raise ValueError(
                    f"layer {i}: window {spec.window} exceeds input extent {h}x{w}"
                )
            layers.append(_MaxPoolLayer(spec.window, spec.stride))
            shape = (
                c,
                ops.conv_output_extent(h, spec.window, spec.stride, 0),
                ops.conv_output_extent(w, spec.window, spec.stride, 0),
            )
        elif spec.kind == "flatten":
            layers.append(_FlattenLayer())
            shape = (int(np.prod(shape)),)
        elif spec.kind == "dense":
            if len(shape) != 1:
                raise ValueError(
                    f"layer {i}: dense requires a flattened input, got shape {shape}"
                )
            fan_in = shape[0]
            weights = _init_uniform(rng, (spec.out_features, fan_in), fan_in, dtype)
            layers.append(_DenseLayer(weights, np.zeros(spec.out_features, dtype=dtype)))
            shape = (spec.out_features,)
        if any(e <= 0 for e in shape):
            raise ValueError(f"layer {i}: produces non-positive extent {shape}")
    return Network(specs, layers, input_shape, class_count)
