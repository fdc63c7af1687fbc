"""Declarative layer lists and the sequential networks built from them."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, InvalidArgument
from . import functional as F
from .rng import Rng
from .tensor import Tensor, as_tensor

LAYER_KINDS = ("dense", "conv", "deconv", "batchnorm", "dropout", "activation", "reshape", "flatten")


@dataclass
class LayerSpec:
    kind: str
    units: int | None = None
    channels: int | None = None
    kernel: int = 5
    stride: int = 1
    padding: int = 0
    output_padding: int = 0
    activation: str | None = None
    alpha: float = F.LRELU_ALPHA
    p: float = 0.5
    shape: tuple | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.stride < 1:
            raise ConfigurationError(f"stride must be >= 1, got {self.stride}")
        if self.kernel < 1:
            raise ConfigurationError(f"kernel extent must be >= 1, got {self.kernel}")
        if self.kind == "dense" and (self.units is None or self.units < 1):
            raise ConfigurationError(f"dense units must be >= 1, got {self.units}")
        if self.kind in ("conv", "deconv") and (self.channels is None or self.channels < 1):
            raise ConfigurationError(f"{self.kind} channels must be >= 1, got {self.channels}")
        if self.kind == "dropout" and not 0 <= self.p < 1:
            raise ConfigurationError(f"drop probability must be in [0,1), got {self.p}")
        if self.kind == "activation" and self.activation not in F.ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.kind == "reshape":
            if not self.shape:
                raise ConfigurationError("reshape needs a target shape")
            self.shape = tuple(int(s) for s in self.shape)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        defaults = LayerSpec.__dataclass_fields__
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name != "kind" and v != defaults[f.name].default:
                d[f.name] = list(v) if isinstance(v, tuple) else v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)


@dataclass
class NetworkSpec:
    input_shape: tuple
    layers: list = field(default_factory=list)
    name: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "input_shape": list(self.input_shape),
                "layers": [l.to_dict() for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(d["input_shape"]), [LayerSpec.from_dict(l) for l in d["layers"]], d.get("name", ""))


def _glorot(rng: Rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(shape, -bound, bound)


class Layer:
    def __init__(self, spec: LayerSpec, in_shape: tuple, rng: Rng, index: int):
        self.spec = spec
        self.index = index
        self.in_shape = in_shape
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}
        s = spec
        fail = lambda msg: ConfigurationError(f"layer {index} ({s.kind}): {msg}")  # noqa: E731
        if s.kind == "dense":
            if len(in_shape) != 1:
                raise fail(f"dense needs a flat input, got shape {in_shape}")
            n_in = in_shape[0]
            self.params["weight"] = Tensor(_glorot(rng, (n_in, s.units), n_in, s.units), requires_grad=True)
            self.params["bias"] = Tensor(np.zeros(s.units), requires_grad=True)
            self.out_shape = (s.units,)
        elif s.kind in ("conv", "deconv"):
            if len(in_shape) != 3:
                raise fail(f"{s.kind} needs a [C,H,W] input, got shape {in_shape}")
            c, h, w = in_shape
            k = s.kernel
            if s.kind == "conv":
                if k > h + 2 * s.padding or k > w + 2 * s.padding:
                    raise fail(f"kernel {k} exceeds padded input {h}x{w}")
                wshape = (s.channels, c, k, k)
                oh = F.conv_out_size(h, k, s.stride, s.padding)
                ow = F.conv_out_size(w, k, s.stride, s.padding)
            else:
                if s.output_padding >= s.stride and s.output_padding:
                    raise fail("output_padding must be smaller than stride")
                wshape = (c, s.channels, k, k)
                oh = F.deconv_out_size(h, k, s.stride, s.padding, s.output_padding)
                ow = F.deconv_out_size(w, k, s.stride, s.padding, s.output_padding)
                if oh < 1 or ow < 1:
                    raise fail(f"empty output extent {oh}x{ow}")
            self.params["weight"] = Tensor(_glorot(rng, wshape, c * k * k, s.channels * k * k), requires_grad=True)
            self.params["bias"] = Tensor(np.zeros(s.channels), requires_grad=True)
            self.out_shape = (s.channels, oh, ow)
        elif s.kind == "batchnorm":
            if len(in_shape) not in (1, 3):
                raise fail(f"batchnorm needs [F] or [C,H,W] input, got {in_shape}")
            ch = in_shape[0]
            self.params["gamma"] = Tensor(np.ones(ch), requires_grad=True)
            self.params["beta"] = Tensor(np.zeros(ch), requires_grad=True)
            self.buffers["running_mean"] = np.zeros(ch)
            self.buffers["running_var"] = np.ones(ch)
            self.out_shape = in_shape
        elif s.kind == "reshape":
            if int(np.prod(s.shape)) != int(np.prod(in_shape)):
                raise fail(f"cannot reshape {in_shape} into {s.shape}")
            self.out_shape = s.shape
        elif s.kind == "flatten":
            self.out_shape = (int(np.prod(in_shape)),)
        else:
            self.out_shape = in_shape

    def forward(self, x: Tensor, training: bool, rng: Rng | None) -> Tensor:
        s, p = self.spec, self.params
        if s.kind == "dense":
            return F.matmul(x, p["weight"]) + p["bias"]
        if s.kind == "conv":
            y = F.conv2d(x, p["weight"], s.stride, s.padding)
            return y + p["bias"].reshape(1, -1, 1, 1)
        if s.kind == "deconv":
            y = F.deconv2d(x, p["weight"], s.stride, s.padding, s.output_padding)
            return y + p["bias"].reshape(1, -1, 1, 1)
        if s.kind == "batchnorm":
            return F.batchnorm(x, p["gamma"], p["beta"], self.buffers["running_mean"],
                               self.buffers["running_var"], training=training)
        if s.kind == "activation":
            return F.activation(x, s.activation, s.alpha)
        if s.kind == "dropout":
            if training and s.p > 0 and rng is None:
                raise InvalidArgument("dropout in training mode needs an rng")
            return F.dropout(x, s.p, rng, training)
        if s.kind == "reshape":
            return x.reshape((x.shape[0],) + s.shape)
        if s.kind == "flatten":
            return x.reshape(x.shape[0], -1)
        raise AssertionError(s.kind)


class Network:
    """Sequential network built from a :class:`NetworkSpec`."""

    def __init__(self, spec: NetworkSpec, rng: Rng):
        self.spec = spec
        self.layers: list[Layer] = []
        shape = tuple(spec.input_shape)
        for i, ls in enumerate(spec.layers):
            layer = Layer(ls, shape, rng.child(f"layer{i}"), i)
            self.layers.append(layer)
            shape = layer.out_shape
        self.output_shape = shape

    def parameters(self) -> list[Tensor]:
        return [t for layer in self.layers for t in layer.params.values()]

    def state(self) -> dict[str, np.ndarray]:
        """Named parameters and buffers, in layer order."""
        out = {}
        for layer in self.layers:
            for k, t in layer.params.items():
                out[f"layer{layer.index}.{k}"] = t.data
            for k, b in layer.buffers.items():
                out[f"layer{layer.index}.{k}"] = b
        return out

    def load_state(self, state: dict):
        for layer in self.layers:
            for k, t in layer.params.items():
                t.data = np.array(state[f"layer{layer.index}.{k}"], dtype=np.float64)
            for k in layer.buffers:
                layer.buffers[k] = np.array(state[f"layer{layer.index}.{k}"], dtype=np.float64)

    def default_probe(self) -> int:
        """Index of the last flatten layer that precedes a dense-only tail.

        Falls back to the last layer before the final dense layer.
        """
        tail_ok = {"dense", "batchnorm", "activation", "dropout"}
        for i in range(len(self.layers) - 1, -1, -1):
            if self.layers[i].spec.kind == "flatten" and all(
                l.spec.kind in tail_ok for l in self.layers[i + 1:]
            ):
                return i
        dense = [i for i, l in enumerate(self.layers) if l.spec.kind == "dense"]
        if len(dense) >= 1 and dense[-1] > 0:
            return dense[-1] - 1
        raise ConfigurationError("network has no hidden layer to probe")

    def run(self, x, training=False, rng=None, tap=None):
        """Forward pass returning ``(output, activation_after_layer[tap])``."""
        x = as_tensor(x)
        if x.shape[1:] != tuple(self.spec.input_shape):
            raise InvalidArgument(
                f"{self.spec.name or 'network'} expects input [B,{','.join(map(str, self.spec.input_shape))}], got {list(x.shape)}"
            )
        hidden = None
        for layer in self.layers:
            x = layer.forward(x, training, rng)
            if tap is not None and layer.index == tap:
                hidden = x
        return x, hidden

    def __call__(self, x, training=False, rng=None):
        return self.run(x, training, rng)[0]


def build_network(spec: NetworkSpec, rng: Rng) -> Network:
    return Network(spec, rng)
