"""JSON weight checkpoints.

Floats are written with ``repr`` precision so loading reproduces every
parameter bit for bit.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layers import layer_from_config
from .network import Network

FORMAT = "spo2cam.checkpoint"
VERSION = 1


def to_dict(net: Network, extra: dict | None = None) -> dict:
    leaves = net.leaves()
    params = [
        {"layer": i, "name": name, "shape": list(p.shape), "data": p.ravel().tolist()}
        for i, name, p in net.named_parameters()
    ]
    buffers = [
        {"layer": i, "name": name, "shape": list(b.shape), "data": b.ravel().tolist()}
        for i, layer in enumerate(leaves)
        for name, b in sorted(layer.buffers.items())
    ]
    return {
        "format": FORMAT,
        "version": VERSION,
        "seed": net.seed,
        "input_shape": list(net.input_shape),
        "spec": net.spec,
        "architecture": net.config(),
        "params": params,
        "buffers": buffers,
        "extra": extra or {},
    }


def from_dict(doc: dict) -> Network:
    if doc.get("format") != FORMAT:
        raise ValueError("not a spo2cam checkpoint")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    root = layer_from_config(doc["architecture"])
    net = Network(root, tuple(doc["input_shape"]), doc["seed"], doc.get("spec"))
    arrays = [np.array(e["data"], dtype=float).reshape(e["shape"]) for e in doc["params"] + doc["buffers"]]
    net.set_weights(arrays)
    return net


def save(net: Network, path, extra: dict | None = None) -> None:
    Path(path).write_text(json.dumps(to_dict(net, extra)))


def load(path) -> Network:
    return from_dict(json.loads(Path(path).read_text()))
