"""Layers operating on batches shaped ``(batch, channels, length)``.

Every layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``self.grads`` on ``backward``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch

ACTIVATIONS = ("relu", "identity")


def _check_activation(name: str) -> str:
    if name not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}")
    return name


def _he_std(fan_in: int, activation: str) -> float:
    return np.sqrt((2.0 if activation == "relu" else 1.0) / fan_in)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def init(self, rng: np.random.Generator) -> None:
        pass

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, shape: tuple) -> tuple:
        """``(channels, length)`` or ``(features,)`` produced from ``shape``."""
        raise NotImplementedError

    def config(self) -> dict:
        return {"kind": self.kind}

    def zero_grad(self) -> None:
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _activate(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            self._active = z > 0
            return np.where(self._active, z, 0.0).astype(z.dtype, copy=False)
        return z

    def _activation_grad(self, dy: np.ndarray) -> np.ndarray:
        # subgradient of ReLU at 0 is 0
        return dy * self._active if self.activation == "relu" else dy


class ChannelCombination(Layer):
    """``V = act(W U + b 1^T)``: mixes input channels identically at every time step."""

    kind = "channel_combination"

    def __init__(self, c_in: int, c_out: int, activation: str = "relu", init_gain: float = 1.0):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.activation = _check_activation(activation)
        # multiplies the He std; a small gain lets training, not the draw, set the mixing direction
        self.init_gain = float(init_gain)
        self.params = {"W": np.zeros((c_out, c_in)), "b": np.zeros(c_out)}

    def init(self, rng):
        std = self.init_gain * _he_std(self.c_in, self.activation)
        self.params["W"] = rng.normal(0.0, std, (self.c_out, self.c_in))
        self.params["b"] = np.zeros(self.c_out)

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[1] != self.c_in:
            raise ShapeMismatch(f"channel combination expects (B, {self.c_in}, L), got {x.shape}")
        self._x = x
        z = np.matmul(self.params["W"], x) + self.params["b"][:, None]
        return self._activate(z)

    def backward(self, dy):
        dz = self._activation_grad(dy)
        self.grads["W"] += np.tensordot(dz, self._x, axes=([0, 2], [0, 2]))
        self.grads["b"] += dz.sum(axis=(0, 2))
        return np.matmul(self.params["W"].T, dz)

    def output_shape(self, shape):
        return (self.c_out, shape[1])

    def config(self):
        return {"kind": self.kind, "c_in": self.c_in, "c_out": self.c_out, "activation": self.activation,
                "init_gain": self.init_gain}


class Conv1D(Layer):
    """Valid (unpadded), stride-1 cross-correlation summed over input channels."""

    kind = "conv1d"

    def __init__(self, c_in: int, filters: int, kernel: int, activation: str = "relu"):
        super().__init__()
        self.c_in, self.filters, self.kernel = c_in, filters, kernel
        self.activation = _check_activation(activation)
        self.params = {"W": np.zeros((filters, c_in, kernel)), "b": np.zeros(filters)}

    def init(self, rng):
        std = _he_std(self.c_in * self.kernel, self.activation)
        self.params["W"] = rng.normal(0.0, std, (self.filters, self.c_in, self.kernel))
        self.params["b"] = np.zeros(self.filters)

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[1] != self.c_in:
            raise ShapeMismatch(f"conv1d expects (B, {self.c_in}, L), got {x.shape}")
        length = x.shape[2]
        if length < self.kernel:
            raise ShapeMismatch(f"input length {length} shorter than kernel {self.kernel}")
        out_len = length - self.kernel + 1
        b = x.shape[0]
        # im2col: (B, out_len, c_in * kernel)
        cols = sliding_window_view(x, self.kernel, axis=2).transpose(0, 2, 1, 3)
        self._cols = cols.reshape(b, out_len, self.c_in * self.kernel)
        self._in_shape = x.shape
        w = self.params["W"].reshape(self.filters, -1)
        z = np.matmul(self._cols, w.T).transpose(0, 2, 1) + self.params["b"][:, None]
        return self._activate(z)

    def backward(self, dy):
        dz = self._activation_grad(dy)
        b, _, out_len = dz.shape
        w = self.params["W"].reshape(self.filters, -1)
        self.grads["W"] += np.tensordot(dz, self._cols, axes=([0, 2], [0, 1])).reshape(self.params["W"].shape)
        self.grads["b"] += dz.sum(axis=(0, 2))
        dcols = np.matmul(dz.transpose(0, 2, 1), w).reshape(b, out_len, self.c_in, self.kernel)
        dx = np.zeros(self._in_shape, dtype=dcols.dtype)
        for k in range(self.kernel):
            dx[:, :, k:k + out_len] += dcols[:, :, :, k].transpose(0, 2, 1)
        return dx

    def output_shape(self, shape):
        return (self.filters, shape[1] - self.kernel + 1)

    def config(self):
        return {"kind": self.kind, "c_in": self.c_in, "filters": self.filters,
                "kernel": self.kernel, "activation": self.activation}


class MaxPool1D(Layer):
    """Max over disjoint pairs along time; an odd trailing sample is dropped."""

    kind = "maxpool1d"

    def __init__(self, factor: int = 2):
        super().__init__()
        self.factor = factor

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] < self.factor:
            raise ShapeMismatch(f"max pooling needs length >= {self.factor}, got {x.shape}")
        out_len = x.shape[2] // self.factor
        f = self.factor
        best = x[:, :, 0 : out_len * f : f]
        arg = np.zeros(best.shape, dtype=np.int8)
        for j in range(1, f):
            cand = x[:, :, j : out_len * f : f]
            upd = cand > best  # strict: ties keep the first element
            best = np.where(upd, cand, best)
            arg[upd] = j
        self._arg = arg
        self._in_shape = x.shape
        return best

    def backward(self, dy):
        out_len = dy.shape[2]
        f = self.factor
        dx = np.zeros(self._in_shape, dtype=dy.dtype)
        for j in range(f):
            dx[:, :, j : out_len * f : f] = np.where(self._arg == j, dy, 0)
        return dx

    def output_shape(self, shape):
        return (shape[0], shape[1] // self.factor)

    def config(self):
        return {"kind": self.kind, "factor": self.factor}


class ReLU(Layer):
    kind = "relu"
    activation = "relu"

    def forward(self, x, train=False):
        return self._activate(x)

    def backward(self, dy):
        return self._activation_grad(dy)

    def output_shape(self, shape):
        return shape


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, train=False):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._in_shape)

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, activation: str = "relu"):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.activation = _check_activation(activation)
        self.params = {"W": np.zeros((n_out, n_in)), "b": np.zeros(n_out)}

    def init(self, rng):
        self.params["W"] = rng.normal(0.0, _he_std(self.n_in, self.activation), (self.n_out, self.n_in))
        self.params["b"] = np.zeros(self.n_out)

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeMismatch(f"dense expects (B, {self.n_in}), got {x.shape}")
        self._x = x
        return self._activate(x @ self.params["W"].T + self.params["b"])

    def backward(self, dy):
        dz = self._activation_grad(dy)
        self.grads["W"] += dz.T @ self._x
        self.grads["b"] += dz.sum(axis=0)
        return dz @ self.params["W"]

    def output_shape(self, shape):
        return (self.n_out,)

    def config(self):
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out, "activation": self.activation}


class BatchNorm1D(Layer):
    """Per-channel normalization over batch and time (or batch only for 2-D input)."""

    kind = "batchnorm"

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.params = {"gamma": np.ones(channels), "beta": np.zeros(channels)}
        self.buffers = {"mean": np.zeros(channels), "var": np.ones(channels)}

    def _axes(self, x):
        return (0, 2) if x.ndim == 3 else (0,)

    def _shape(self, v, x):
        return v[None, :, None] if x.ndim == 3 else v[None, :]

    def forward(self, x, train=False):
        axes = self._axes(x)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.buffers["mean"] = (1 - m) * self.buffers["mean"] + m * mean
            self.buffers["var"] = (1 - m) * self.buffers["var"] + m * var
        else:
            mean, var = self.buffers["mean"], self.buffers["var"]
        self._train = train
        self._inv = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - self._shape(mean, x)) * self._shape(self._inv, x)
        return self._shape(self.params["gamma"], x) * self._xhat + self._shape(self.params["beta"], x)

    def backward(self, dy):
        axes = self._axes(dy)
        xhat = self._xhat
        self.grads["gamma"] += (dy * xhat).sum(axis=axes)
        self.grads["beta"] += dy.sum(axis=axes)
        g = self._shape(self.params["gamma"] * self._inv, dy)
        if not self._train:
            return dy * g
        dxhat_mean = dy.mean(axis=axes, keepdims=True)
        proj = (dy * xhat).mean(axis=axes, keepdims=True)
        return g * (dy - dxhat_mean - xhat * proj)

    def output_shape(self, shape):
        return shape

    def config(self):
        return {"kind": self.kind, "channels": self.channels, "momentum": self.momentum, "eps": self.eps}


class Dropout(Layer):
    """Inverted dropout; identity at inference."""

    kind = "dropout"

    def __init__(self, p: float = 0.0, seed: int = 0):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must lie in [0, 1)")
        self.p = p
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def init(self, rng):
        self._rng = np.random.default_rng(rng.integers(2**63))

    def forward(self, x, train=False):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        self._mask = (self._rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask

    def output_shape(self, shape):
        return shape

    def config(self):
        return {"kind": self.kind, "p": self.p}


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, layers: list[Layer]):
        super().__init__()
        self.layers = list(layers)

    def init(self, rng):
        for layer in self.layers:
            layer.init(rng)

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def output_shape(self, shape):
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def leaves(self):
        for layer in self.layers:
            if isinstance(layer, (Sequential, PerChannel)):
                yield from layer.leaves()
            else:
                yield layer

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def config(self):
        return {"kind": self.kind, "layers": [layer.config() for layer in self.layers]}


class PerChannel(Layer):
    """Feeds input channel ``i`` alone to branch ``i`` and stacks the branch
    outputs along the channel axis. Branches share no weights."""

    kind = "per_channel"

    def __init__(self, branches: list[Sequential]):
        super().__init__()
        self.branches = list(branches)

    def init(self, rng):
        for branch in self.branches:
            branch.init(rng)

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[1] != len(self.branches):
            raise ShapeMismatch(f"expected {len(self.branches)} input channels, got {x.shape}")
        outs = [branch.forward(x[:, i:i + 1, :], train) for i, branch in enumerate(self.branches)]
        self._splits = np.cumsum([o.shape[1] for o in outs])[:-1]
        self._in_shape = x.shape
        return np.concatenate(outs, axis=1)

    def backward(self, dy):
        parts = np.split(dy, self._splits, axis=1)
        dx = np.empty(self._in_shape, dtype=dy.dtype)
        for i, (branch, part) in enumerate(zip(self.branches, parts)):
            dx[:, i:i + 1, :] = branch.backward(part)
        return dx

    def output_shape(self, shape):
        outs = [branch.output_shape((1, shape[1])) for branch in self.branches]
        lengths = {o[1] for o in outs}
        if len(lengths) != 1:
            raise ShapeMismatch("branch output lengths differ")
        return (sum(o[0] for o in outs), outs[0][1])

    def zero_grad(self):
        for branch in self.branches:
            branch.zero_grad()

    def leaves(self):
        for branch in self.branches:
            yield from branch.leaves()

    @property
    def n_params(self) -> int:
        return sum(b.n_params for b in self.branches)

    def config(self):
        return {"kind": self.kind, "branches": [b.config() for b in self.branches]}


_SIMPLE = {
    "channel_combination": lambda c: ChannelCombination(c["c_in"], c["c_out"], c["activation"],
                                                        c.get("init_gain", 1.0)),
    "conv1d": lambda c: Conv1D(c["c_in"], c["filters"], c["kernel"], c["activation"]),
    "maxpool1d": lambda c: MaxPool1D(c["factor"]),
    "relu": lambda c: ReLU(),
    "flatten": lambda c: Flatten(),
    "dense": lambda c: Dense(c["n_in"], c["n_out"], c["activation"]),
    "batchnorm": lambda c: BatchNorm1D(c["channels"], c["momentum"], c["eps"]),
    "dropout": lambda c: Dropout(c["p"]),
}


def layer_from_config(cfg: dict) -> Layer:
    kind = cfg["kind"]
    if kind == "sequential":
        return Sequential([layer_from_config(c) for c in cfg["layers"]])
    if kind == "per_channel":
        return PerChannel([layer_from_config(c) for c in cfg["branches"]])
    if kind not in _SIMPLE:
        raise ValueError(f"unknown layer kind {kind!r}")
    return _SIMPLE[kind](cfg)
