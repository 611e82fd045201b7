from .layers import (
    BatchNorm1D,
    ChannelCombination,
    Conv1D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool1D,
    PerChannel,
    ReLU,
    Sequential,
    layer_from_config,
)
from .network import Adam, AdamState, Network, adam_step, rmse_loss

__all__ = [
    "Adam",
    "AdamState",
    "BatchNorm1D",
    "ChannelCombination",
    "Conv1D",
    "Dense",
    "Dropout",
    "Flatten",
    "Layer",
    "MaxPool1D",
    "Network",
    "PerChannel",
    "ReLU",
    "Sequential",
    "adam_step",
    "layer_from_config",
    "rmse_loss",
]
