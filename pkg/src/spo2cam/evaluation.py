"""Post-processing, accuracy metrics, median/IQR aggregation and the RGB
weight projection table."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyList, NoOverlap, ShapeMismatch

MA_WINDOW = 50  # 10 s at 5 Hz
SPO2_CEILING = 100.0
TIME_TOL = 1e-6


@dataclass
class PredictionSeries:
    times: np.ndarray
    values: np.ndarray
    stage: str = "raw"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ShapeMismatch("times and values differ in length")
        if self.stage not in ("raw", "postprocessed"):
            raise ValueError(f"unknown stage {self.stage!r}")

    def __len__(self) -> int:
        return self.times.size


def moving_average(x: np.ndarray, window: int = MA_WINDOW) -> np.ndarray:
    """Centered moving average whose window shrinks symmetrically at the edges.

    Interior samples average ``[i - window//2, i + (window - 1)//2]``. Within
    reach of either end the window becomes ``[i - k, i + k]`` with ``k`` the
    distance to the nearer end (capped at ``(window - 1)//2``).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    left, right = window // 2, (window - 1) // 2
    csum = np.concatenate([[0.0], np.cumsum(x)])
    i = np.arange(n)
    interior = (i - left >= 0) & (i + right <= n - 1)
    k = np.minimum(np.minimum(i, n - 1 - i), right)
    lo = np.where(interior, i - left, i - k)
    hi = np.where(interior, i + right, i + k)
    return (csum[hi + 1] - csum[lo]) / (hi - lo + 1)


def postprocess(raw: PredictionSeries, window: int = MA_WINDOW) -> PredictionSeries:
    """Clip values above 100% and then smooth with a 10-s moving average."""
    if raw.stage != "raw":
        raise ValueError("postprocess expects a raw prediction series")
    clipped = np.minimum(raw.values, SPO2_CEILING)
    return PredictionSeries(raw.times.copy(), moving_average(clipped, window), "postprocessed")


@dataclass
class MetricsReport:
    rho: float
    mae: float
    rmse: float
    n: int
    zero_variance: bool = False

    def as_dict(self) -> dict:
        return {"rho": self.rho, "mae": self.mae, "rmse": self.rmse, "n": self.n,
                "zero_variance": self.zero_variance}


def align_series(pred_times, pred_values, ref_times, ref_values):
    """Values of both series at their common timestamps (within 1 us)."""
    pred_times = np.asarray(pred_times, dtype=float)
    ref_times = np.asarray(ref_times, dtype=float)
    # first reference sample not earlier than each prediction (minus tolerance)
    idx = np.searchsorted(ref_times, pred_times - TIME_TOL)
    idx_c = np.minimum(idx, max(ref_times.size - 1, 0))
    hit = (idx < ref_times.size) & (np.abs(ref_times[idx_c] - pred_times) <= TIME_TOL)
    return (np.asarray(pred_values, dtype=float)[hit],
            np.asarray(ref_values, dtype=float)[idx_c[hit]],
            pred_times[hit])


def metric_values(pred: np.ndarray, ref: np.ndarray) -> MetricsReport:
    pred = np.asarray(pred, dtype=float)
    ref = np.asarray(ref, dtype=float)
    err = pred - ref
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err**2)))
    pc, rc = pred - pred.mean(), ref - ref.mean()
    denom = np.sqrt(np.sum(pc**2) * np.sum(rc**2))
    if denom <= 1e-12 * max(1.0, np.abs(pred).max(), np.abs(ref).max()) ** 2:
        return MetricsReport(0.0, mae, rmse, pred.size, zero_variance=True)
    rho = float(np.clip(np.sum(pc * rc) / denom, -1.0, 1.0))
    return MetricsReport(rho, mae, rmse, pred.size)


def metrics(pred: PredictionSeries, ref) -> MetricsReport:
    """Pearson correlation, MAE and RMSE over the timestamps shared by the
    prediction and the (5 Hz) reference series."""
    p, r, _ = align_series(pred.times, pred.values, ref.times, ref.values)
    if p.size < 2:
        raise NoOverlap("prediction and reference share fewer than two timestamps")
    return metric_values(p, r)


def aggregate(values) -> tuple[float, float]:
    """Median and interquartile range using linear-interpolation quantiles."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise EmptyList("nothing to aggregate")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return float(med), float(q3 - q1)


@dataclass
class ProjectionTable:
    rows: np.ndarray  # (n, 4): wR, wG, wB, rho
    direction: np.ndarray  # unit vector of the fitted line through the origin
    selected: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def blue_red(self) -> float:
        return float(self.direction[2] / self.direction[0])

    @property
    def green_red(self) -> float:
        return float(self.direction[1] / self.direction[0])


def export_weight_projection(weights, rhos, high_quantile: float = 0.5) -> ProjectionTable:
    """Tabulate per-instance RGB combination weights with their test correlation
    and fit a line through the origin to the better-performing instances.

    ``weights`` is ``(n, 3)`` in R, G, B order. Instances whose correlation is
    at or above the ``high_quantile`` quantile are used for the fit; the line
    is their leading principal direction (sign-invariant, so weight vectors
    that differ only in sign land on the same line).
    """
    w = np.asarray(weights, dtype=float).reshape(-1, 3)
    rho = np.asarray(rhos, dtype=float)
    if rho.shape != (w.shape[0],):
        raise ShapeMismatch("one correlation per weight vector required")
    if w.shape[0] == 0:
        raise EmptyList("no instances")
    selected = rho >= np.quantile(rho, high_quantile)
    pts = w[selected]
    _, _, vt = np.linalg.svd(pts, full_matrices=False)
    direction = vt[0] if vt[0][0] >= 0 else -vt[0]
    return ProjectionTable(np.column_stack([w, rho]), direction, selected)
