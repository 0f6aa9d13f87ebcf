"""The desk-scale six-command classifier.

A Network is an ordered layer stack: 5 conv layers and 3 dense layers by
default, with the final dense emitting one logit per flight command. Layers
carry a per-layer learning-rate multiplier so fine-tuning can train a freshly
replaced head faster than (or freeze) the retained layers.

Forward/backward caches are returned to the caller rather than stored on the
network, so a trained network is immutable under concurrent predict calls.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .commands import NUM_COMMANDS, FlightCommand
from .errors import DimensionError, DomainError
from .rng import make_rng


class Conv2d:
    kind = "conv2d"

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        pad: int = 0,
        lr_mult: float = 1.0,
        rng: Optional[np.random.Generator] = None,
    ):
        if lr_mult < 0:
            raise DomainError("lr_mult must be >= 0")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        self.lr_mult = lr_mult
        fan_in = in_channels * kernel * kernel
        fan_out = out_channels * kernel * kernel
        if rng is None:
            w = np.zeros((out_channels, in_channels, kernel, kernel), dtype=T.DTYPE)
        else:
            w = T.glorot_uniform(
                rng, (out_channels, in_channels, kernel, kernel), fan_in, fan_out
            )
        self.weight = T.Tensor(w)
        self.bias = T.Tensor(np.zeros(out_channels, dtype=T.DTYPE))

    def forward(self, x):
        return T.conv2d_forward(x, self.weight.data, self.bias.data, self.stride, self.pad)

    def backward(self, out_grad, cache, want_param_grads=True):
        dx, dw, db = T.conv2d_backward(out_grad, cache)
        if want_param_grads:
            self.weight.grad = dw
            self.bias.grad = db
        return dx

    def params(self):
        return [self.weight, self.bias]

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise DimensionError(f"layer expects {self.in_channels} channels, got {c}")
        ho = (h + 2 * self.pad - self.kernel) // self.stride + 1
        wo = (w + 2 * self.pad - self.kernel) // self.stride + 1
        if ho < 1 or wo < 1:
            raise DimensionError(f"conv output extent not positive for input {in_shape}")
        return (self.out_channels, ho, wo)

    def spec(self):
        return {
            "kind": self.kind,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "stride": self.stride,
            "pad": self.pad,
            "lr_mult": self.lr_mult,
        }


class ReLU:
    kind = "relu"
    lr_mult = 0.0

    def forward(self, x):
        return T.relu_forward(x)

    def backward(self, out_grad, cache, want_param_grads=True):
        return T.relu_backward(out_grad, cache)

    def params(self):
        return []

    def out_shape(self, in_shape):
        return in_shape

    def spec(self):
        return {"kind": self.kind}


class MaxPool2d:
    kind = "maxpool2d"
    lr_mult = 0.0

    def __init__(self, kernel: int = 2, stride: Optional[int] = None):
        self.kernel = kernel
        self.stride = kernel if stride is None else stride

    def forward(self, x):
        return T.maxpool2d_forward(x, self.kernel, self.stride)

    def backward(self, out_grad, cache, want_param_grads=True):
        return T.maxpool2d_backward(out_grad, cache)

    def params(self):
        return []

    def out_shape(self, in_shape):
        c, h, w = in_shape
        ho = (h - self.kernel) // self.stride + 1
        wo = (w - self.kernel) // self.stride + 1
        if ho < 1 or wo < 1:
            raise DimensionError(f"pool output extent not positive for input {in_shape}")
        return (c, ho, wo)

    def spec(self):
        return {"kind": self.kind, "kernel": self.kernel, "stride": self.stride}


class Flatten:
    kind = "flatten"
    lr_mult = 0.0

    def forward(self, x):
        return T.flatten_forward(x)

    def backward(self, out_grad, cache, want_param_grads=True):
        return T.flatten_backward(out_grad, cache)

    def params(self):
        return []

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def spec(self):
        return {"kind": self.kind}


class Dense:
    kind = "dense"

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        lr_mult: float = 1.0,
        rng: Optional[np.random.Generator] = None,
    ):
        if lr_mult < 0:
            raise DomainError("lr_mult must be >= 0")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.lr_mult = lr_mult
        if rng is None:
            w = np.zeros((in_dim, out_dim), dtype=T.DTYPE)
        else:
            w = T.glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim)
        self.weight = T.Tensor(w)
        self.bias = T.Tensor(np.zeros(out_dim, dtype=T.DTYPE))

    def forward(self, x):
        return T.dense_forward(x, self.weight.data, self.bias.data)

    def backward(self, out_grad, cache, want_param_grads=True):
        dx, dw, db = T.dense_backward(out_grad, cache)
        if want_param_grads:
            self.weight.grad = dw
            self.bias.grad = db
        return dx

    def params(self):
        return [self.weight, self.bias]

    def out_shape(self, in_shape):
        (d,) = in_shape
        if d != self.in_dim:
            raise DimensionError(f"layer expects dim {self.in_dim}, got {d}")
        return (self.out_dim,)

    def spec(self):
        return {
            "kind": self.kind,
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "lr_mult": self.lr_mult,
        }


LAYER_KINDS = {
    "conv2d": Conv2d,
    "relu": ReLU,
    "maxpool2d": MaxPool2d,
    "flatten": Flatten,
    "dense": Dense,
}


def layer_from_spec(spec: dict):
    kind = spec.get("kind")
    if kind not in LAYER_KINDS:
        raise DomainError(f"unknown layer kind {kind!r}")
    args = {k: v for k, v in spec.items() if k != "kind"}
    return LAYER_KINDS[kind](**args)


@dataclass(frozen=True)
class Prediction:
    command: FlightCommand
    confidence: float
    distribution: np.ndarray  # six reals summing to 1


class Network:
    """Ordered layer stack mapping a (3,H,W) image to six command logits."""

    def __init__(self, layers: Sequence, input_shape: tuple,
                 class_names: Sequence[FlightCommand] = tuple(FlightCommand)):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.class_names = tuple(class_names)
        self._validate_stack()

    def _validate_stack(self):
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
        self.output_shape = shape

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        """Run the stack; returns (logits, caches) with caches for backward."""
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, out_grad: np.ndarray, caches: list,
                 want_param_grads: bool = True) -> np.ndarray:
        """Propagate a logit gradient back to the input image."""
        dx = out_grad
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dx = layer.backward(dx, cache, want_param_grads=want_param_grads)
        return dx

    def params(self) -> list[T.Tensor]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def param_lr_mults(self) -> list[float]:
        out = []
        for layer in self.layers:
            out.extend(layer.lr_mult for _ in layer.params())
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def layer_specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def copy(self) -> "Network":
        return copy.deepcopy(self)


def build_micronet(input_shape: tuple = (3, 64, 64), seed: int = 0) -> Network:
    """Build the default 5-conv / 3-dense stack with seeded glorot weights."""
    c, h, w = input_shape
    if c != 3:
        raise DimensionError(f"expected 3 input channels, got {c}")
    if h < 32 or w < 32:
        raise DimensionError(f"input extents must be >= 32, got {h}x{w}")
    rng = make_rng(seed)
    layers = [
        Conv2d(3, 8, kernel=5, stride=2, pad=2, rng=rng),
        ReLU(),
        MaxPool2d(2),
        Conv2d(8, 16, kernel=3, pad=1, rng=rng),
        ReLU(),
        MaxPool2d(2),
        Conv2d(16, 16, kernel=3, pad=1, rng=rng),
        ReLU(),
        Conv2d(16, 16, kernel=3, pad=1, rng=rng),
        ReLU(),
        Conv2d(16, 16, kernel=3, pad=1, rng=rng),
        ReLU(),
        MaxPool2d(2),
        Flatten(),
    ]
    shape = input_shape
    for layer in layers:
        shape = layer.out_shape(shape)
    layers += [
        Dense(shape[0], 128, rng=rng),
        ReLU(),
        Dense(128, 64, rng=rng),
        ReLU(),
        Dense(64, NUM_COMMANDS, rng=rng),
    ]
    return Network(layers, input_shape)


def replace_head(
    network: Network,
    num_classes: int = NUM_COMMANDS,
    head_lr_mult: float = 10.0,
    seed: int = 0,
) -> Network:
    """Reinitialize the final dense layer for a new label set.

    Every non-head parameter is carried over bitwise; the new head gets a
    higher lr_mult so it learns faster than the retained layers.
    """
    if num_classes < 2:
        raise DomainError(f"num_classes must be >= 2, got {num_classes}")
    dense_idx = [i for i, l in enumerate(network.layers) if l.kind == "dense"]
    if not dense_idx:
        raise DomainError("network has no dense layer to replace")
    head_pos = dense_idx[-1]
    new_net = network.copy()
    old_head = new_net.layers[head_pos]
    new_net.layers[head_pos] = Dense(
        old_head.in_dim, num_classes, lr_mult=head_lr_mult, rng=make_rng(seed)
    )
    class_names = tuple(FlightCommand) if num_classes == NUM_COMMANDS else tuple(range(num_classes))
    return Network(new_net.layers, new_net.input_shape, class_names)


def predict(network: Network, image: np.ndarray) -> Prediction:
    """Classify one frame; confidence is the max softmax probability."""
    if image.shape != network.input_shape:
        raise DimensionError(
            f"image shape {image.shape} != network input {network.input_shape}"
        )
    logits, _ = network.forward(image.astype(T.DTYPE, copy=False))
    dist = T.softmax(logits.astype(np.float64))
    idx = int(np.argmax(dist))  # lowest index wins ties
    return Prediction(
        command=network.class_names[idx],
        confidence=float(dist[idx]),
        distribution=dist,
    )
