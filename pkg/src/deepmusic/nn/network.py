"""Layer chain assembly, initialization, and reverse-mode differentiation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import substream
from . import layers as L

VALID_KINDS = ("conv", "batchnorm", "relu", "fullyconnected", "dropout", "softmax")


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the chain: a kind plus its kind-specific options."""

    kind: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv":
            k = self.options.get("kernel_size", 0)
            if k < 1 or k % 2 == 0:
                raise ValueError("conv kernel size must be odd and >= 1")
            if self.options.get("out_channels", 0) < 1:
                raise ValueError("conv needs a positive out_channels")
        if self.kind == "fullyconnected" and self.options.get("width", 0) < 1:
            raise ValueError("fullyconnected needs a positive width")
        if self.kind == "dropout":
            p = self.options.get("p", -1.0)
            if not 0.0 <= p < 1.0:
                raise ValueError("dropout probability must lie in [0, 1)")

    def to_json(self) -> dict:
        return {"kind": self.kind, "options": dict(self.options)}

    @classmethod
    def from_json(cls, obj: dict) -> "LayerSpec":
        return cls(obj["kind"], dict(obj["options"]))


def conv_spec(kernel_size: int, out_channels: int) -> LayerSpec:
    return LayerSpec("conv", {"kernel_size": kernel_size, "out_channels": out_channels})


def fc_spec(width: int) -> LayerSpec:
    return LayerSpec("fullyconnected", {"width": width})


def dropout_spec(p: float) -> LayerSpec:
    return LayerSpec("dropout", {"p": p})


class _Conv:
    def __init__(self, spec, in_shape, rng, dtype):
        h, w, cin = in_shape
        k = spec.options["kernel_size"]
        cout = spec.options["out_channels"]
        if k > h or k > w:
            raise ValueError(f"conv kernel {k} does not fit a {h}x{w} input")
        limit = 1.0 / np.sqrt(k * k * cin)
        self.params = {
            "kernel": rng.uniform(-limit, limit, size=(k, k, cin, cout)).astype(dtype),
            "bias": np.zeros(cout, dtype=dtype),
        }
        self.grads = {}
        self.out_shape = (h - k + 1, w - k + 1, cout)
        self._x = None

    def forward(self, x, mode, rng):
        self._x = x
        return L.conv2d_forward(x, self.params["kernel"], self.params["bias"])

    def backward(self, dout):
        dx, dk, db = L.conv2d_backward(dout, self._x, self.params["kernel"])
        self.grads = {"kernel": dk, "bias": db}
        return dx


class _BatchNorm:
    def __init__(self, spec, in_shape, rng, dtype):
        channels = in_shape[-1]
        self.params = {
            "scale": np.ones(channels, dtype=dtype),
            "shift": np.zeros(channels, dtype=dtype),
        }
        self.state = {
            "running_mean": np.zeros(channels, dtype=np.float64),
            "running_var": np.ones(channels, dtype=np.float64),
        }
        self.grads = {}
        self.out_shape = in_shape
        self._cache = None

    def forward(self, x, mode, rng):
        out, cache, mean, var = L.batchnorm_forward(
            x, self.params["scale"], self.params["shift"],
            self.state["running_mean"], self.state["running_var"], mode,
        )
        if mode == "train":
            self.state["running_mean"] = mean
            self.state["running_var"] = var
        self._cache = cache
        return out

    def backward(self, dout):
        dx, dscale, dshift = L.batchnorm_backward(dout, self._cache, self.params["scale"])
        self.grads = {"scale": dscale, "shift": dshift}
        return dx


class _ReLU:
    def __init__(self, spec, in_shape, rng, dtype):
        self.params = {}
        self.grads = {}
        self.out_shape = in_shape
        self._x = None

    def forward(self, x, mode, rng):
        self._x = x
        return L.relu(x)

    def backward(self, dout):
        return L.relu_backward(dout, self._x)


class _Dense:
    def __init__(self, spec, in_shape, rng, dtype):
        in_width = int(np.prod(in_shape))
        width = spec.options["width"]
        limit = 1.0 / np.sqrt(in_width)
        self.params = {
            "weight": rng.uniform(-limit, limit, size=(in_width, width)).astype(dtype),
            "bias": np.zeros(width, dtype=dtype),
        }
        self.grads = {}
        self.out_shape = (width,)
        self._x = None

    def forward(self, x, mode, rng):
        self._x = x
        return L.fc_forward(x, self.params["weight"], self.params["bias"])

    def backward(self, dout):
        dx, dw, db = L.fc_backward(dout, self._x, self.params["weight"])
        self.grads = {"weight": dw, "bias": db}
        return dx


class _Dropout:
    def __init__(self, spec, in_shape, rng, dtype):
        self.p = spec.options["p"]
        self.params = {}
        self.grads = {}
        self.out_shape = in_shape
        self._mask = None

    def forward(self, x, mode, rng):
        out, mask = L.dropout(x, self.p, mode, rng)
        self._mask = mask
        return out

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class _Softmax:
    def __init__(self, spec, in_shape, rng, dtype):
        self.params = {}
        self.grads = {}
        self.out_shape = in_shape
        self._out = None

    def forward(self, x, mode, rng):
        self._out = L.softmax(x)
        return self._out

    def backward(self, dout):
        return L.softmax_backward(dout, self._out)


_LAYER_CLASSES = {
    "conv": _Conv,
    "batchnorm": _BatchNorm,
    "relu": _ReLU,
    "fullyconnected": _Dense,
    "dropout": _Dropout,
    "softmax": _Softmax,
}


class Network:
    """A feed-forward chain of layers with an MSE regression head.

    Parameters are float32; initialization draws one substream per layer
    from (seed, *stream), so any (seed, stream) pair reproduces the same
    network bit for bit.
    """

    def __init__(self, specs, input_shape, seed: int = 0, stream: tuple = (), dtype=np.float32):
        self.specs = list(specs)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        self.layers = []
        shape = self.input_shape
        for index, spec in enumerate(self.specs):
            rng = substream(self.seed, *self.stream, index)
            layer = _LAYER_CLASSES[spec.kind](spec, shape, rng, dtype)
            self.layers.append(layer)
            shape = layer.out_shape
        self.output_shape = shape

    @property
    def output_len(self) -> int:
        return int(np.prod(self.output_shape))

    def forward(self, x: np.ndarray, mode: str = "infer", rng=None) -> np.ndarray:
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} != expected {self.input_shape}")
        out = x
        for layer in self.layers:
            out = layer.forward(out, mode, rng)
        return out

    def loss(self, x, targets, mode: str = "train", rng=None) -> float:
        pred = self.forward(x, mode, rng)
        value, _ = L.mse_loss(pred, targets)
        return value

    def loss_and_grads(self, x, targets, rng=None):
        """Mean batch loss and parameter gradients, in parameter order."""
        pred = self.forward(x, mode="train", rng=rng)
        value, dpred = L.mse_loss(pred, targets)
        delta = dpred
        for layer in reversed(self.layers):
            delta = layer.backward(delta)
        return value, self.gradients()

    def parameters(self):
        """Trainable arrays in canonical (layer, name) order; live references."""
        out = []
        for layer in self.layers:
            out.extend(layer.params[name] for name in sorted(layer.params))
        return out

    def gradients(self):
        out = []
        for layer in self.layers:
            out.extend(layer.grads[name] for name in sorted(layer.params))
        return out

    def parameter_manifest(self):
        """(label, shape) pairs covering parameters and batchnorm statistics."""
        entries = []
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                entries.append((f"layer{i:02d}.{name}", layer.params[name].shape))
            for name in sorted(getattr(layer, "state", {})):
                entries.append((f"layer{i:02d}.{name}", layer.state[name].shape))
        return entries

    def state_arrays(self):
        """Arrays matching :meth:`parameter_manifest`, in the same order."""
        out = []
        for layer in self.layers:
            out.extend(layer.params[name] for name in sorted(layer.params))
            state = getattr(layer, "state", {})
            out.extend(state[name] for name in sorted(state))
        return out

    def load_state_arrays(self, arrays) -> None:
        expected = self.state_arrays()
        if len(arrays) != len(expected):
            raise ValueError(f"expected {len(expected)} arrays, got {len(arrays)}")
        for target, source in zip(expected, arrays):
            if target.shape != source.shape:
                raise ValueError(f"shape mismatch {source.shape} vs {target.shape}")
            target[...] = source.astype(target.dtype)

    def snapshot(self):
        return [a.copy() for a in self.state_arrays()]

    def restore(self, snapshot) -> None:
        self.load_state_arrays(snapshot)


def backward(net: Network, inputs: np.ndarray, targets: np.ndarray, rng=None):
    """Gradients of the mean batch loss for every parameter of ``net``."""
    _, grads = net.loss_and_grads(inputs, targets, rng=rng)
    return grads


def build_network(conv_stages, fc_width, out_len, dropout_p=0.5) -> list:
    """Generic chain: [conv-norm-relu]* then fc, dropout, fc(out), softmax."""
    specs = []
    for kernel_size, channels in conv_stages:
        specs.append(conv_spec(kernel_size, channels))
        specs.append(LayerSpec("batchnorm"))
        specs.append(LayerSpec("relu"))
    specs.append(fc_spec(fc_width))
    specs.append(dropout_spec(dropout_p))
    specs.append(fc_spec(out_len))
    specs.append(LayerSpec("softmax"))
    return specs


def build_deepmusic_network(
    input_side: int,
    region_len: int,
    num_filters: int = 256,
    fc_width: int = 1024,
    dropout_p: float = 0.5,
) -> list:
    """Layer chain for one angular-subregion network.

    Four valid-padded conv stages (5, 5, 3, 3 kernels, each followed by
    normalization and ReLU) shrink an M x M x 3 covariance image by 12,
    then a hidden fully connected layer with dropout feeds the softmax
    output of one value per subregion grid point.
    """
    if input_side < 13:
        raise ValueError("input side must be at least 13 for the 5,5,3,3 kernel chain")
    stages = [(5, num_filters), (5, num_filters), (3, num_filters), (3, num_filters)]
    return build_network(stages, fc_width, region_len, dropout_p)
