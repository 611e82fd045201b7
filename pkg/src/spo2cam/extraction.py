"""Skin color signal extraction.

Skin pixels are located per frame by thresholding the Cr plane of the
YCbCr color space with Otsu's method; the R, G and B values of the skin
pixels are then spatially averaged to give one sample per frame.

Frames are ``(height, width, 3)`` arrays in RGB order, either ``uint8`` or
floating point on the same 0-255 scale.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateHistogram,
    EmptyMask,
    InsufficientContrast,
    ShapeMismatch,
)

# full-range BT.601 (JFIF) RGB -> YCbCr
YCBCR_MATRIX = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
YCBCR_OFFSET = np.array([0.0, 128.0, 128.0])

MIN_SKIN_FRACTION = 0.005
MAX_SKIN_FRACTION = 0.995


@dataclass
class SkinMask:
    bits: np.ndarray  # (height, width) bool

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def skin_fraction(self) -> float:
        return float(self.bits.mean())


@dataclass
class SkinColorSignal:
    """Per-frame spatially averaged (R, G, B) samples of a recording."""

    samples: np.ndarray  # (n_frames, 3)
    frame_rate: float
    source_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[1] != 3:
            raise ShapeMismatch(f"expected (n, 3) samples, got {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("skin color signal contains non-finite samples")
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be positive")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) / self.frame_rate

    def scaled(self, gain: float) -> "SkinColorSignal":
        return SkinColorSignal(self.samples * gain, self.frame_rate, self.source_id, dict(self.meta))


def validate_frame(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3 or frame.shape[0] == 0 or frame.shape[1] == 0:
        raise ShapeMismatch(f"frame must be (height, width, 3), got {frame.shape}")
    if frame.dtype != np.uint8:
        if not np.all(np.isfinite(frame)) or frame.min() < 0 or frame.max() > 255:
            raise ValueError("frame values must lie in [0, 255]")
    return frame


def rgb_to_ycbcr(frame: np.ndarray, clamp: bool = False) -> np.ndarray:
    """Convert an RGB frame to full-range YCbCr planes (float, last axis Y, Cb, Cr).

    Values are left unclamped unless ``clamp`` is set; pure red, for example,
    has Cr = 255.5.
    """
    frame = validate_frame(frame).astype(float)
    out = frame @ YCBCR_MATRIX.T + YCBCR_OFFSET
    return np.clip(out, 0.0, 255.0) if clamp else out


def cr_histogram(cr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quantize a Cr plane to 256 integer bins (clamped) and histogram it.

    Returns ``(bins, histogram)`` where ``bins`` has the plane's shape.
    """
    bins = np.clip(np.rint(cr), 0, 255).astype(np.int64)
    return bins, np.bincount(bins.ravel(), minlength=256)


def otsu_threshold(histogram: Sequence[int]) -> int:
    """Otsu threshold of a 256-bin histogram.

    Pixels in bins ``<= t`` form one class, ``> t`` the other. The cut
    maximizing between-class variance is found in exact integer arithmetic so
    that equal scores (e.g. cuts inside an empty gap) resolve to the smallest
    threshold deterministically.
    """
    hist = np.asarray(histogram)
    if hist.shape != (256,):
        raise ShapeMismatch(f"expected 256 bins, got {hist.shape}")
    if np.any(hist < 0) or not np.all(hist == np.round(hist)):
        raise ValueError("histogram counts must be non-negative integers")
    counts = [int(c) for c in hist]
    if sum(1 for c in counts if c > 0) < 2:
        raise DegenerateHistogram("fewer than two populated bins")

    total_n = sum(counts)
    total_s = sum(i * c for i, c in enumerate(counts))
    best_t, best_num, best_den = -1, -1, 1
    n0 = s0 = 0
    for t in range(255):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = total_n - n0
        if n0 == 0 or n1 == 0:
            continue
        # between-class variance is proportional to (N*s0 - n0*S)^2 / (n0*n1)
        num = (total_n * s0 - n0 * total_s) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def segment_cr(cr: np.ndarray, skin_high_cr: bool = True) -> SkinMask:
    """Otsu-segment a Cr plane; the class with the higher mean Cr is skin
    unless ``skin_high_cr`` is False."""
    bins, hist = cr_histogram(cr)
    try:
        t = otsu_threshold(hist)
    except DegenerateHistogram as exc:
        raise InsufficientContrast(str(exc)) from exc
    bits = bins > t if skin_high_cr else bins <= t
    mask = SkinMask(bits)
    frac = mask.skin_fraction
    if frac < MIN_SKIN_FRACTION or frac > MAX_SKIN_FRACTION:
        raise InsufficientContrast(f"skin fraction {frac:.4f} outside guard band")
    return mask


def segment_skin(frame: np.ndarray, skin_high_cr: bool = True) -> SkinMask:
    cr = rgb_to_ycbcr(frame)[..., 2]
    return segment_cr(cr, skin_high_cr)


def spatial_average(frame: np.ndarray, mask: SkinMask) -> np.ndarray:
    """Mean (R, G, B) over the masked pixels."""
    frame = validate_frame(frame)
    if mask.bits.shape != frame.shape[:2]:
        raise ShapeMismatch(f"mask {mask.bits.shape} does not match frame {frame.shape[:2]}")
    n = int(mask.bits.sum())
    if n == 0:
        raise EmptyMask("mask selects no pixels")
    return frame[mask.bits].astype(float).sum(axis=0) / n


def extract_skin_signal(
    frames: Iterable[np.ndarray],
    frame_rate: float,
    source_id: str = "",
    skin_high_cr: bool = True,
) -> SkinColorSignal:
    """One spatially averaged skin sample per frame, thresholding every frame
    independently."""
    samples = []
    shape = None
    for i, frame in enumerate(frames):
        try:
            frame = validate_frame(frame)
            if shape is None:
                shape = frame.shape
            elif frame.shape != shape:
                raise ShapeMismatch(f"frame shape {frame.shape} differs from {shape}")
            samples.append(spatial_average(frame, segment_skin(frame, skin_high_cr)))
        except (InsufficientContrast, EmptyMask, ShapeMismatch, ValueError) as exc:
            err = type(exc)(f"frame {i}: {exc}")
            err.frame_index = i
            raise err from exc
    if not samples:
        raise ValueError("no frames to extract from")
    return SkinColorSignal(np.array(samples), frame_rate, source_id)
