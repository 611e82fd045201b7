"""SVG plots of CSV artifacts. Output is byte-stable across reruns."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import io


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "spo2cam"
    matplotlib.rcParams["svg.fonttype"] = "none"
    return plt


def render(src, out, reference=None, config_hash: str = "") -> str:
    """Pick a plot from the CSV header and save it as SVG. Returns the kind."""
    header, body = io.read_csv(src)
    cols = {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(header) if h != "recording_id"}
    plt = _pyplot()
    fig, kind = None, ""
    if header[:1] == ["t"]:
        kind = "prediction"
        fig, ax = plt.subplots(figsize=(8, 3))
        ax.plot(cols["t"], cols[header[1]], label=header[1], lw=1.2)
        if reference is not None:
            ref = io.read_reference(reference)
            ax.plot(ref.times, ref.values, label="reference", lw=1.0, color="k")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("SpO2 (%)")
        ax.legend(loc="lower left")
    elif header == ["epoch", "train_rmse", "val_rmse"]:
        kind = "history"
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(cols["epoch"], cols["train_rmse"], label="train")
        ax.plot(cols["epoch"], cols["val_rmse"], label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel("RMSE (%)")
        ax.legend()
    elif header == ["wR", "wG", "wB", "rho"]:
        kind = "projection"
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.8))
        for ax, other, name in ((axes[0], "wB", "blue"), (axes[1], "wG", "green")):
            sc = ax.scatter(cols["wR"], cols[other], c=cols["rho"], cmap="viridis", s=14)
            ax.axhline(0, color="0.7", lw=0.5)
            ax.axvline(0, color="0.7", lw=0.5)
            ax.set_xlabel("red weight")
            ax.set_ylabel(f"{name} weight")
        fig.colorbar(sc, ax=axes, label="test correlation")
    elif header == ["bracket", "rung", "config_id", "epochs", "val_rmse"]:
        kind = "tuning"
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.scatter(cols["epochs"], cols["val_rmse"], c=cols["bracket"], s=10)
        ax.set_xscale("log")
        ax.set_xlabel("epochs")
        ax.set_ylabel("validation RMSE (%)")
    elif header[:2] == ["recording_id", "rho"]:
        kind = "metrics"
        names = [r[0] for r in body]
        fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(names) + 2), 3.5))
        ax.bar(np.arange(len(names)), cols["rho"])
        ax.set_xticks(np.arange(len(names)), names, rotation=45, ha="right")
        ax.set_ylabel("Pearson correlation")
    else:
        raise ValueError(f"{src}: no plot for header {','.join(header)}")
    if config_hash:
        fig.text(0.99, 0.01, config_hash, ha="right", va="bottom", fontsize=5, color="0.6")
    fig.tight_layout()
    fig.savefig(Path(out), format="svg", metadata={"Date": None, "Creator": None,
                                                   "Description": f"config_hash={config_hash}"})
    plt.close(fig)
    return kind
