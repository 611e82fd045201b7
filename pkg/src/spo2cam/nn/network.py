"""Network container, RMSE loss and Adam."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyBatch, ShapeMismatch
from .layers import Dense, Layer, Sequential

LOSS_EPS = 1e-12


def rmse_loss(pred, target, eps: float = LOSS_EPS) -> tuple[float, np.ndarray]:
    """``sqrt(mean((pred - target)^2) + eps)`` and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise EmptyBatch("empty batch")
    resid = pred - target
    loss = float(np.sqrt(np.mean(resid.astype(float) ** 2) + eps))
    return loss, resid / (resid.size * loss)


class Network:
    """A :class:`Sequential` stack mapping ``(batch, 3, 300)`` to ``(batch,)``."""

    def __init__(self, root: Sequential, input_shape=(3, 300), seed: int = 0, spec: dict | None = None):
        self.root = root
        self.input_shape = tuple(input_shape)
        self.seed = seed
        self.spec = spec
        self.dtype = np.dtype(np.float64)
        out = root.output_shape(self.input_shape)
        if out != (1,):
            raise ShapeMismatch(f"network must end in a single output node, produces {out}")

    @classmethod
    def build(cls, layers: list[Layer], input_shape=(3, 300), seed: int = 0, spec: dict | None = None):
        net = cls(Sequential(layers), input_shape, seed, spec)
        net.root.init(np.random.default_rng(seed))
        return net

    # parameters -------------------------------------------------------
    def leaves(self) -> list[Layer]:
        return list(self.root.leaves())

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.leaves() for _, p in sorted(layer.params.items())]

    def gradients(self) -> list[np.ndarray]:
        return [layer.grads[k] for layer in self.leaves() for k, _ in sorted(layer.params.items())]

    def named_parameters(self):
        for i, layer in enumerate(self.leaves()):
            for name, p in sorted(layer.params.items()):
                yield i, name, p

    def buffers(self) -> list[np.ndarray]:
        return [b for layer in self.leaves() for _, b in sorted(layer.buffers.items())]

    @property
    def n_params(self) -> int:
        return self.root.n_params

    def get_weights(self) -> list[np.ndarray]:
        """Copies of all parameters followed by all buffers."""
        return [p.copy() for p in self.parameters()] + [b.copy() for b in self.buffers()]

    def set_weights(self, weights: list[np.ndarray]) -> None:
        n_par = len(self.parameters())
        slots = [(layer.params, k) for layer in self.leaves() for k in sorted(layer.params)]
        slots += [(layer.buffers, k) for layer in self.leaves() for k in sorted(layer.buffers)]
        if len(weights) != len(slots):
            raise ShapeMismatch(f"expected {len(slots)} arrays, got {len(weights)}")
        for i, ((store, key), w) in enumerate(zip(slots, weights)):
            if store[key].shape != np.shape(w):
                kind = "parameter" if i < n_par else "buffer"
                raise ShapeMismatch(f"{kind} {key}: {store[key].shape} vs {np.shape(w)}")
            store[key] = np.array(w, dtype=store[key].dtype, copy=True)

    def head(self) -> Dense:
        last = self.leaves()[-1]
        if not isinstance(last, Dense):
            raise TypeError("network does not end in a dense layer")
        return last

    def astype(self, dtype) -> "Network":
        """Cast parameters and buffers in place (float32 for faster training)."""
        self.dtype = np.dtype(dtype)
        for layer in self.leaves():
            for store in (layer.params, layer.buffers):
                for k in store:
                    store[k] = store[k].astype(self.dtype)
        return self

    # computation --------------------------------------------------------
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"network expects (B, {self.input_shape}), got {x.shape}")
        return self.root.forward(x, train)[:, 0]

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        out = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros(0)

    def backward(self, dpred: np.ndarray) -> None:
        self.root.zero_grad()
        self.root.backward(np.asarray(dpred)[:, None])

    def loss_and_grad(self, x: np.ndarray, target: np.ndarray, train: bool = False) -> float:
        """Forward + backward of the batch RMSE; gradients land in ``gradients()``."""
        pred = self.forward(x, train)
        loss, dpred = rmse_loss(pred, target)
        self.backward(dpred)
        return loss

    def config(self) -> dict:
        return self.root.config()


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if len(params) != len(grads):
        raise ShapeMismatch("parameter and gradient lists differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeMismatch(f"parameter {p.shape} vs gradient {g.shape}")
    m = state.m or [np.zeros_like(p) for p in params]
    v = state.v or [np.zeros_like(p) for p in params]
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_m = [b1 * mi + (1 - b1) * g for mi, g in zip(m, grads)]
    new_v = [b2 * vi + (1 - b2) * g * g for vi, g in zip(v, grads)]
    c1, c2 = 1 - b1**t, 1 - b2**t
    new_params = [
        p - state.lr * (mi / c1) / (np.sqrt(vi / c2) + state.eps)
        for p, mi, vi in zip(params, new_m, new_v)
    ]
    new_state = AdamState(state.lr, b1, b2, state.eps, t, new_m, new_v)
    return new_params, new_state


class Adam:
    """In-place Adam over a network's parameter arrays."""

    def __init__(self, net: Network, lr: float = 1e-3, **kw):
        self.net = net
        self.state = AdamState(lr=lr, **kw)

    def step(self) -> None:
        params = self.net.parameters()
        new_params, self.state = adam_step(self.state, params, self.net.gradients())
        for p, q in zip(params, new_params):
            p[...] = q
