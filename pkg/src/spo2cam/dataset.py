"""Reference resampling, sliding-window segmentation and dataset splits."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, make_smoothing_spline

from .errors import (
    BadBoundaries,
    EmptyDataset,
    ReferenceGap,
    ShapeMismatch,
    SignalTooShort,
    TooFewKnots,
    TooFewParticipants,
)
from .extraction import SkinColorSignal

WINDOW = 300  # 10 s at 30 fps
STRIDE = 6  # 0.2 s at 30 fps
STD_FLOOR = 1e-12
TIME_TOL = 1e-6
SCOPES = ("perfusion", "segment", "recording")
DEFAULT_SCOPE = "perfusion"


@dataclass
class ReferenceSeries:
    times: np.ndarray
    values: np.ndarray
    rate: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ShapeMismatch("times and values must be 1-D arrays of equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("reference times must be strictly increasing")
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    def __len__(self) -> int:
        return self.times.size

    def check_range(self, lo: float = 70.0, hi: float = 100.0) -> None:
        if np.any(self.values < lo) or np.any(self.values > hi):
            raise ValueError(f"reference values outside [{lo}, {hi}]")

    def value_at(self, t: np.ndarray) -> np.ndarray:
        """Linearly interpolated values at ``t``; raises ReferenceGap outside the span."""
        t = np.asarray(t, dtype=float)
        if t.size and (t.min() < self.times[0] - TIME_TOL or t.max() > self.times[-1] + TIME_TOL):
            raise ReferenceGap(
                f"requested [{t.min():.3f}, {t.max():.3f}] s, reference covers "
                f"[{self.times[0]:.3f}, {self.times[-1]:.3f}] s"
            )
        return np.interp(t, self.times, self.values)


def uniform_grid(t0: float, t1: float, rate: float) -> np.ndarray:
    n = int(np.floor((t1 - t0) * rate + 1e-9)) + 1
    return t0 + np.arange(n) / rate


def interpolate_reference(
    ref: ReferenceSeries, target_rate: float = 5.0, smoothing: float = 0.0
) -> ReferenceSeries:
    """Resample a reference series onto a uniform grid with a cubic spline.

    With ``smoothing == 0`` the spline interpolates the knots; a positive value
    is passed as the penalty of a cubic smoothing spline.
    """
    if len(ref) < 4:
        raise TooFewKnots(f"cubic spline needs at least 4 knots, got {len(ref)}")
    if target_rate < ref.rate:
        raise ValueError("target_rate must not be below the reference rate")
    if smoothing == 0:
        spline = CubicSpline(ref.times, ref.values)
    else:
        spline = make_smoothing_spline(ref.times, ref.values, lam=smoothing)
    grid = uniform_grid(ref.times[0], ref.times[-1], target_rate)
    return ReferenceSeries(grid, spline(grid), target_rate)


def standardize(raw: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance scaling of each channel (last axis is time).

    Channels whose population standard deviation is below 1e-12 become zeros.
    """
    raw = np.asarray(raw, dtype=float)
    mean = raw.mean(axis=-1, keepdims=True)
    std = raw.std(axis=-1, keepdims=True)
    centered = raw - mean
    out = np.divide(centered, std, out=np.zeros_like(centered), where=std >= STD_FLOOR)
    return out


def segment_count(n_frames: int, window: int = WINDOW, stride: int = STRIDE) -> int:
    return 0 if n_frames < window else (n_frames - window) // stride + 1


def window_starts(n_frames: int, window: int = WINDOW, stride: int = STRIDE) -> np.ndarray:
    if n_frames < window:
        raise SignalTooShort(f"{n_frames} frames, need at least {window}")
    return np.arange(segment_count(n_frames, window, stride)) * stride


@dataclass
class Segment:
    data: np.ndarray
    label: float
    end_time: float
    participant_id: str
    cycle_index: int
    hand_mode: str
    skin_type: str


@dataclass
class SegmentDataset:
    """Standardized segments stored as stacked arrays.

    ``data`` is ``(n, 3, window)``; per-segment metadata lives in parallel
    1-D arrays. ``cycle_index`` is 0 until a cycle split assigns 1..3.
    """

    data: np.ndarray
    labels: np.ndarray
    start_times: np.ndarray
    end_times: np.ndarray
    participant_ids: np.ndarray
    recording_ids: np.ndarray
    cycle_index: np.ndarray
    hand_mode: np.ndarray
    skin_type: np.ndarray
    provenance: list = field(default_factory=list)
    split_tag: str = ""

    def __post_init__(self):
        n = self.data.shape[0]
        if self.data.ndim != 3 or self.data.shape[1] != 3:
            raise ShapeMismatch(f"segments must be (n, 3, L), got {self.data.shape}")
        for name in ("labels", "start_times", "end_times", "participant_ids",
                     "recording_ids", "cycle_index", "hand_mode", "skin_type"):
            if len(getattr(self, name)) != n:
                raise ShapeMismatch(f"{name} has {len(getattr(self, name))} entries, expected {n}")

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, i: int) -> Segment:
        return Segment(
            self.data[i], float(self.labels[i]), float(self.end_times[i]),
            str(self.participant_ids[i]), int(self.cycle_index[i]),
            str(self.hand_mode[i]), str(self.skin_type[i]),
        )

    def subset(self, index, split_tag: str | None = None) -> "SegmentDataset":
        index = np.asarray(index)
        if index.dtype != bool:
            index = index.astype(np.int64)
        return SegmentDataset(
            data=self.data[index],
            labels=self.labels[index],
            start_times=self.start_times[index],
            end_times=self.end_times[index],
            participant_ids=self.participant_ids[index],
            recording_ids=self.recording_ids[index],
            cycle_index=self.cycle_index[index],
            hand_mode=self.hand_mode[index],
            skin_type=self.skin_type[index],
            provenance=list(self.provenance),
            split_tag=self.split_tag if split_tag is None else split_tag,
        )

    @classmethod
    def concat(cls, parts: Sequence["SegmentDataset"], split_tag: str = "") -> "SegmentDataset":
        if not parts:
            raise EmptyDataset("nothing to concatenate")
        shapes = {p.data.shape[1:] for p in parts}
        if len(shapes) != 1:
            raise ShapeMismatch(f"segment shapes differ: {shapes}")
        provenance = []
        for p in parts:
            provenance.extend(x for x in p.provenance if x not in provenance)
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
        return cls(
            data=cat("data"), labels=cat("labels"), start_times=cat("start_times"),
            end_times=cat("end_times"), participant_ids=cat("participant_ids"),
            recording_ids=cat("recording_ids"), cycle_index=cat("cycle_index"),
            hand_mode=cat("hand_mode"), skin_type=cat("skin_type"),
            provenance=provenance, split_tag=split_tag,
        )


def segment_windows(
    signal: SkinColorSignal,
    window: int = WINDOW,
    stride: int = STRIDE,
    scope: str = DEFAULT_SCOPE,
) -> tuple[np.ndarray, np.ndarray]:
    """Cut a signal into normalized ``(n, 3, window)`` segments.

    Normalization scopes:

    * ``"perfusion"`` (default): each segment channel becomes its percent
      deviation from its own mean, ``100 * (x / mean(x) - 1)``. The result is
      zero-mean per segment like a z-score, but the pulsatile amplitude
      relative to the DC level (the quantity that carries SpO2) survives.
    * ``"segment"``: zero mean and unit variance per segment channel. This
      removes the AC/DC ratio, so only waveform shape is left to learn from.
    * ``"recording"``: one z-score per channel over the whole recording.

    Returns ``(segments, start_frames)``.
    """
    starts = window_starts(len(signal), window, stride)
    x = signal.samples.T  # (3, n)
    if scope == "recording":
        x = standardize(x)
    elif scope not in SCOPES:
        raise ValueError(f"unknown standardization scope {scope!r}")
    idx = starts[:, None] + np.arange(window)[None, :]
    segs = np.ascontiguousarray(x[:, idx].transpose(1, 0, 2))
    if scope == "segment":
        segs = standardize(segs)
    elif scope == "perfusion":
        dc = segs.mean(axis=-1, keepdims=True)
        ok = np.abs(dc) > STD_FLOOR
        segs = np.where(ok, 100.0 * (segs / np.where(ok, dc, 1.0) - 1.0), 0.0)
    return segs, starts


def label_times(start_times: np.ndarray, end_times: np.ndarray, align: str) -> np.ndarray:
    if align == "end":
        return end_times
    if align == "center":
        return 0.5 * (start_times + end_times)
    raise ValueError(f"unknown label alignment {align!r}")


def window_segments(
    signal: SkinColorSignal,
    ref5: ReferenceSeries,
    window: int = WINDOW,
    stride: int = STRIDE,
    scope: str = DEFAULT_SCOPE,
    align: str = "end",
    participant_id: str | None = None,
    hand_mode: str | None = None,
    skin_type: str | None = None,
) -> SegmentDataset:
    """Labeled sliding-window segments of one recording.

    Frame ``k`` is taken at ``k / frame_rate`` seconds and a window over
    frames ``[s, s + window)`` spans ``[s, s + window] / frame_rate``. Labels
    are the reference value at the window end (or its center with
    ``align="center"``).
    """
    segs, starts = segment_windows(signal, window, stride, scope)
    start_t = starts / signal.frame_rate
    end_t = (starts + window) / signal.frame_rate
    labels = ref5.value_at(label_times(start_t, end_t, align))
    n = len(starts)
    meta = signal.meta
    fill = lambda v: np.full(n, v, dtype=object)  # noqa: E731
    return SegmentDataset(
        data=segs,
        labels=labels,
        start_times=start_t,
        end_times=end_t,
        participant_ids=fill(participant_id if participant_id is not None else meta.get("participant_id", "")),
        recording_ids=fill(signal.source_id),
        cycle_index=np.zeros(n, dtype=int),
        hand_mode=fill(hand_mode if hand_mode is not None else meta.get("hand_mode", "")),
        skin_type=fill(skin_type if skin_type is not None else meta.get("skin_type", "")),
        provenance=[signal.source_id],
    )


def assign_cycles(start_times: np.ndarray, end_times: np.ndarray, boundaries: Sequence[float]) -> np.ndarray:
    """Cycle number (1-based) of every span fully inside one cycle, 0 otherwise."""
    b = np.asarray(boundaries, dtype=float)
    if b.ndim != 1 or b.size != 4:
        raise BadBoundaries(f"need 4 boundaries delimiting 3 cycles, got {b.size}")
    if np.any(np.diff(b) <= 0):
        raise BadBoundaries("boundaries must be strictly increasing")
    out = np.zeros(len(start_times), dtype=int)
    for k in range(3):
        inside = (start_times >= b[k] - TIME_TOL) & (end_times <= b[k + 1] + TIME_TOL)
        out[inside & (out == 0)] = k + 1
    return out


def split_by_cycle(
    ds: SegmentDataset, boundaries: Sequence[float], train_cycles=(1, 2), val_cycles=(3,)
) -> tuple[SegmentDataset, SegmentDataset]:
    """Train on segments inside the first two cycles, validate on the third.

    Segments straddling a cycle boundary are dropped so no frame is shared
    between the two splits.
    """
    cycles = assign_cycles(ds.start_times, ds.end_times, boundaries)
    tagged = replace(ds, cycle_index=cycles)
    train = tagged.subset(np.flatnonzero(np.isin(cycles, train_cycles)), "train")
    val = tagged.subset(np.flatnonzero(np.isin(cycles, val_cycles)), "val")
    return train, val


def bootstrap_oversample(ds: SegmentDataset, target_size: int, seed: int) -> SegmentDataset:
    """Uniform resampling with replacement to ``target_size`` segments."""
    if len(ds) == 0:
        raise EmptyDataset("cannot resample an empty dataset")
    rng = np.random.default_rng(seed)
    return ds.subset(rng.integers(0, len(ds), size=int(target_size)))


def leave_one_out_splits(corpus: Mapping[str, object] | Sequence[str]) -> list[tuple[list[str], str]]:
    """One ``(train_participants, test_participant)`` pair per participant."""
    participants = list(corpus.keys() if isinstance(corpus, Mapping) else corpus)
    if len(set(participants)) != len(participants):
        raise ValueError("duplicate participant ids")
    if len(participants) < 2:
        raise TooFewParticipants(f"need at least 2 participants, got {len(participants)}")
    return [([p for p in participants if p != test], test) for test in participants]
