"""Model builders, training loop and recording-level prediction.

Model 1 mixes color channels first (channel-combination stack ending in 7
channels) and then extracts temporal features with conv + max-pool layers.
Model 2 extracts temporal features from each color channel separately and
mixes the channels afterwards. Model 3 interleaves both through conv layers
with shrinking filter counts. Exact widths are not fixed anywhere, so the
defaults below are sized to the reference parameter totals.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .dataset import DEFAULT_SCOPE, STRIDE, WINDOW, SegmentDataset, label_times, segment_windows
from .errors import DivergenceDetected, EmptyDataset, SignalTooShort, SpecInvalid
from .evaluation import PredictionSeries
from .extraction import SkinColorSignal
from .nn import (
    Adam,
    BatchNorm1D,
    ChannelCombination,
    Conv1D,
    Dense,
    Dropout,
    Flatten,
    MaxPool1D,
    Network,
    PerChannel,
    ReLU,
    Sequential,
)

KINDS = ("Model1", "Model2", "Model3", "Model1LinearCC", "Model1DenseFE", "DingBaseline")

# reference parameter totals the default widths are sized to
TARGET_PARAMS = {"Model1": 34_000, "Model2": 12_000, "Model3": 307_000}
BUDGET_TOLERANCE = 0.2


@dataclass
class NetworkSpec:
    kind: str
    cc_channels: list[int] = field(default_factory=list)
    filters: list[int] = field(default_factory=list)
    kernels: list[int] = field(default_factory=list)
    dense: list[int] = field(default_factory=list)
    fe_dense: list[int] = field(default_factory=list)
    dropout: float = 0.0
    batchnorm: bool = False
    # std multiplier for the channel-combination weights at initialization
    cc_init_gain: float = 1.0
    seed: int = 0
    # parameter total the build must land near (within BUDGET_TOLERANCE)
    budget: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(**d)

    def with_(self, **changes) -> "NetworkSpec":
        d = self.to_dict()
        d.update(changes)
        return NetworkSpec(**d)


DEFAULT_SPECS = {
    "Model1": NetworkSpec("Model1", cc_channels=[16, 12, 7], filters=[16, 16, 16],
                          kernels=[7, 7, 7], dense=[56], budget=TARGET_PARAMS["Model1"]),
    "Model2": NetworkSpec("Model2", cc_channels=[16, 12, 7], filters=[8, 8],
                          kernels=[5, 5], dense=[20], budget=TARGET_PARAMS["Model2"]),
    "Model3": NetworkSpec("Model3", filters=[256, 96, 48, 24], kernels=[9, 9, 9, 9],
                          dense=[96], budget=TARGET_PARAMS["Model3"]),
    # small init so the learned RGB direction is set by training, not by the draw
    "Model1LinearCC": NetworkSpec("Model1LinearCC", cc_channels=[1], filters=[16, 16, 16],
                                  kernels=[7, 7, 7], dense=[56], cc_init_gain=0.01),
    "Model1DenseFE": NetworkSpec("Model1DenseFE", cc_channels=[16, 12, 7], fe_dense=[14, 16], dense=[]),
    "DingBaseline": NetworkSpec("DingBaseline", filters=[32, 16], kernels=[9, 9], dense=[32]),
}


def default_spec(kind: str, seed: int = 0) -> NetworkSpec:
    if kind not in DEFAULT_SPECS:
        raise SpecInvalid(f"unknown model kind {kind!r}; expected one of {KINDS}")
    return DEFAULT_SPECS[kind].with_(seed=seed)


def _feature_block(c_in: int, filters: int, kernel: int, batchnorm: bool) -> list:
    if batchnorm:
        return [Conv1D(c_in, filters, kernel, "identity"), BatchNorm1D(filters), ReLU(), MaxPool1D(2)]
    return [Conv1D(c_in, filters, kernel, "relu"), MaxPool1D(2)]


def _conv_stack(c_in: int, spec: NetworkSpec) -> list:
    if len(spec.filters) != len(spec.kernels) or not spec.filters:
        raise SpecInvalid("filters and kernels must be non-empty and of equal length")
    layers = []
    for f, k in zip(spec.filters, spec.kernels):
        layers += _feature_block(c_in, f, k, spec.batchnorm)
        c_in = f
    return layers


def _cc_stack(c_in: int, widths: list[int], activation: str = "relu", gain: float = 1.0) -> list:
    layers = []
    for w in widths:
        layers.append(ChannelCombination(c_in, w, activation, gain))
        c_in = w
    return layers


def _head(n_in: int, spec: NetworkSpec) -> list:
    layers = []
    if spec.dropout > 0:
        layers.append(Dropout(spec.dropout))
    for n in spec.dense:
        layers.append(Dense(n_in, n, "relu"))
        n_in = n
    layers.append(Dense(n_in, 1, "identity"))
    return layers


def _flat_size(layers: list, input_shape) -> int:
    shape = Sequential(layers).output_shape(input_shape)
    if len(shape) == 2 and shape[1] < 1:
        raise SpecInvalid(f"temporal length collapses to {shape[1]}")
    return int(np.prod(shape))


def _body(spec: NetworkSpec, input_shape) -> list:
    kind = spec.kind
    if kind == "Model1":
        if not spec.cc_channels:
            raise SpecInvalid("Model1 needs channel-combination widths")
        return _cc_stack(3, spec.cc_channels, gain=spec.cc_init_gain) + _conv_stack(spec.cc_channels[-1], spec)
    if kind == "Model1LinearCC":
        if len(spec.cc_channels) != 1:
            raise SpecInvalid("Model1LinearCC has exactly one linear channel-combination layer")
        return _cc_stack(3, spec.cc_channels, "identity", spec.cc_init_gain) + _conv_stack(spec.cc_channels[0], spec)
    if kind == "Model1DenseFE":
        if not spec.cc_channels:
            raise SpecInvalid("Model1DenseFE needs channel-combination widths")
        layers = _cc_stack(3, spec.cc_channels, gain=spec.cc_init_gain) + [Flatten()]
        n_in = spec.cc_channels[-1] * input_shape[1]
        for n in spec.fe_dense:
            layers.append(Dense(n_in, n, "relu"))
            n_in = n
        return layers
    if kind == "Model2":
        if not spec.cc_channels:
            raise SpecInvalid("Model2 needs channel-combination widths")
        branches = [Sequential(_conv_stack(1, spec)) for _ in range(input_shape[0])]
        mixed = input_shape[0] * spec.filters[-1]
        return [PerChannel(branches)] + _cc_stack(mixed, spec.cc_channels, gain=spec.cc_init_gain)
    if kind in ("Model3", "DingBaseline"):
        return _conv_stack(input_shape[0], spec)
    raise SpecInvalid(f"unknown model kind {kind!r}")


def build_model(spec: NetworkSpec, input_shape=(3, WINDOW)) -> Network:
    """Instantiate and initialize the network described by ``spec``."""
    try:
        body = _body(spec, input_shape)
        flat = _flat_size(body, input_shape)
    except SpecInvalid:
        raise
    except Exception as exc:  # shape errors from impossible layer stacks
        raise SpecInvalid(str(exc)) from exc
    layers = body + ([] if isinstance(body[-1], (Flatten, Dense)) else [Flatten()]) + _head(flat, spec)
    net = Network.build(layers, input_shape, spec.seed, spec.to_dict())
    if spec.budget is not None:
        lo, hi = (1 - BUDGET_TOLERANCE) * spec.budget, (1 + BUDGET_TOLERANCE) * spec.budget
        if not lo <= net.n_params <= hi:
            raise SpecInvalid(f"{spec.kind} has {net.n_params} parameters, budget is [{lo:.0f}, {hi:.0f}]")
    return net


def build_ablation(kind: str, seed: int = 0) -> Network:
    if kind not in ("Model1LinearCC", "Model1DenseFE"):
        raise SpecInvalid(f"{kind!r} is not an ablation variant")
    return build_model(default_spec(kind, seed))


def expected_param_count(spec: NetworkSpec, input_shape=(3, WINDOW)) -> int:
    """Closed-form parameter total from layer shapes, without building arrays."""
    total = 0
    length = input_shape[1]

    def conv_stack(c_in, length):
        n = 0
        for f, k in zip(spec.filters, spec.kernels):
            n += f * c_in * k + f + (2 * f if spec.batchnorm else 0)
            length = (length - k + 1) // 2
            c_in = f
        return n, c_in, length

    def cc(c_in, widths):
        n = 0
        for w in widths:
            n += w * c_in + w
            c_in = w
        return n, c_in

    def head(n_in):
        n = 0
        for h in spec.dense:
            n += h * n_in + h
            n_in = h
        return n + n_in + 1

    if spec.kind in ("Model1", "Model1LinearCC"):
        n1, c = cc(3, spec.cc_channels)
        n2, c, length = conv_stack(c, length)
        total = n1 + n2 + head(c * length)
    elif spec.kind == "Model1DenseFE":
        n1, c = cc(3, spec.cc_channels)
        n_in, n2 = c * length, 0
        for h in spec.fe_dense:
            n2 += h * n_in + h
            n_in = h
        total = n1 + n2 + head(n_in)
    elif spec.kind == "Model2":
        n1, c, length = conv_stack(1, length)
        n2, c = cc(3 * c, spec.cc_channels)
        total = 3 * n1 + n2 + head(c * length)
    else:
        n1, c, length = conv_stack(3, length)
        total = n1 + head(c * length)
    return total


# training ----------------------------------------------------------------


@dataclass
class TrainingConfig:
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 64
    oversample_target: int | None = None
    seed: int = 0
    init_output_bias: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("lr, epochs and batch_size must be positive")
        if self.oversample_target is not None and self.oversample_target < 1:
            raise ValueError("oversample_target must be positive")


@dataclass
class TrainResult:
    weights: list[np.ndarray]
    history: list[dict]
    best_epoch: int
    best_val_rmse: float


def evaluate_rmse(net: Network, ds: SegmentDataset, batch_size: int = 256) -> float:
    pred = net.predict(ds.data, batch_size)
    return float(np.sqrt(np.mean((pred - ds.labels) ** 2)))


def train(
    net: Network,
    train_ds: SegmentDataset,
    val_ds: SegmentDataset,
    cfg: TrainingConfig,
    callback: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Minibatch Adam on RMSE, keeping the weights of the epoch with the lowest
    validation RMSE. The network is left holding those weights."""
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise EmptyDataset("training and validation sets must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    if cfg.init_output_bias:
        net.head().params["b"][:] = float(np.mean(train_ds.labels))
    out_dtype = net.dtype
    net.astype(cfg.dtype)
    opt = Adam(net, lr=cfg.lr)
    x, y = train_ds.data.astype(cfg.dtype), train_ds.labels.astype(cfg.dtype)
    n = len(train_ds)
    history = []
    best = (np.inf, 0, net.get_weights())
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        sq_sum = 0.0
        for i in range(0, n, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            pred = net.forward(x[idx], train=True)
            resid = pred - y[idx]
            loss = float(np.sqrt(np.mean(resid.astype(float) ** 2) + 1e-12))
            if not np.isfinite(loss):
                raise DivergenceDetected(f"non-finite training loss at epoch {epoch}")
            net.backward((resid / (resid.size * loss)).astype(cfg.dtype))
            opt.step()
            sq_sum += float(np.sum(resid.astype(float) ** 2))
        val_rmse = evaluate_rmse(net, val_ds)
        if not np.isfinite(val_rmse):
            raise DivergenceDetected(f"non-finite validation loss at epoch {epoch}")
        row = {"epoch": epoch, "train_rmse": float(np.sqrt(sq_sum / n)), "val_rmse": val_rmse}
        history.append(row)
        if callback is not None:
            callback(row)
        if val_rmse < best[0]:
            best = (val_rmse, epoch, net.get_weights())
    net.astype(out_dtype)
    net.set_weights(best[2])
    weights = net.get_weights()
    return TrainResult(weights, history, best[1], best[0])


def predict_recording(
    net: Network,
    signal: SkinColorSignal,
    scope: str = DEFAULT_SCOPE,
    align: str = "end",
    window: int = WINDOW,
    stride: int = STRIDE,
) -> PredictionSeries:
    """Raw (unclipped, unsmoothed) prediction for every sliding window."""
    if len(signal) < window:
        raise SignalTooShort(f"{len(signal)} frames, need at least {window}")
    segs, starts = segment_windows(signal, window, stride, scope)
    start_t = starts / signal.frame_rate
    end_t = (starts + window) / signal.frame_rate
    return PredictionSeries(label_times(start_t, end_t, align), net.predict(segs), "raw")


def clone(net: Network) -> Network:
    return copy.deepcopy(net)
