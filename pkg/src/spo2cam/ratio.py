"""Classical ratio-of-ratios SpO2 estimator with a linear calibration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import detrend

from .dataset import STRIDE, WINDOW, label_times, window_starts
from .errors import DegenerateFit, NoPulse
from .extraction import SkinColorSignal

CHANNELS = {"R": 0, "G": 1, "B": 2}


@dataclass
class RatioSeries:
    times: np.ndarray
    ratios: np.ndarray


@dataclass
class RatioCalibration:
    """``SpO2 = intercept - slope * R``."""

    intercept: float
    slope: float

    def estimate(self, ratios) -> np.ndarray:
        return self.intercept - self.slope * np.asarray(ratios, dtype=float)


def window_ratios(windows: np.ndarray, numerator: int = 0, denominator: int = 2) -> np.ndarray:
    """(AC/DC of one channel) / (AC/DC of another) for raw ``(n, 3, L)`` windows.

    AC is the population standard deviation of the linearly detrended window,
    DC its mean.
    """
    dc = windows.mean(axis=-1)
    ac = detrend(windows, axis=-1, type="linear").std(axis=-1)
    if np.any(dc[:, [numerator, denominator]] <= 0):
        raise NoPulse("non-positive DC level")
    perfusion = ac / dc
    if np.any(perfusion[:, denominator] < 1e-9):
        raise NoPulse("no pulsatile component in the reference channel")
    return perfusion[:, numerator] / perfusion[:, denominator]


def ratio_of_ratios(
    signal: SkinColorSignal,
    window: int = WINDOW,
    stride: int = STRIDE,
    pair: str = "RB",
    align: str = "end",
) -> RatioSeries:
    """Sliding-window ratio of ratios on the same windows as the CNN segments.

    ``pair`` picks the numerator/denominator channels ("RB" or "RG").
    Timestamps are window end times unless ``align="center"``.
    """
    raw, starts = _raw_windows(signal, window, stride)
    ratios = window_ratios(raw, CHANNELS[pair[0]], CHANNELS[pair[1]])
    start_t = starts / signal.frame_rate
    end_t = (starts + window) / signal.frame_rate
    return RatioSeries(label_times(start_t, end_t, align), ratios)


def _raw_windows(signal: SkinColorSignal, window: int, stride: int):
    starts = window_starts(len(signal), window, stride)
    idx = starts[:, None] + np.arange(window)[None, :]
    return signal.samples.T[:, idx].transpose(1, 0, 2), starts


def calibrate(ratios, spo2) -> RatioCalibration:
    """Least-squares fit of ``SpO2 = A - B * R``."""
    r = np.asarray(ratios, dtype=float)
    y = np.asarray(spo2, dtype=float)
    if r.shape != y.shape or r.size < 2:
        raise DegenerateFit("need at least two (ratio, SpO2) pairs")
    if np.ptp(r) <= 1e-12 * max(1.0, np.abs(r).max()):
        raise DegenerateFit("all ratios are equal")
    design = np.column_stack([np.ones_like(r), -r])
    (a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
    return RatioCalibration(float(a), float(b))
