"""Corpus handling and the two evaluation protocols.

A corpus is a JSON file mapping participants to recordings; each recording
is a signal CSV, a 1 Hz reference CSV and an annotation JSON (cycle
boundaries plus metadata). Paths are relative to the corpus file.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import io
from .dataset import (
    DEFAULT_SCOPE,
    ReferenceSeries,
    SegmentDataset,
    bootstrap_oversample,
    interpolate_reference,
    leave_one_out_splits,
    split_by_cycle,
    window_segments,
)
from .errors import EmptyDataset
from .evaluation import MetricsReport, PredictionSeries, metrics, postprocess
from .extraction import SkinColorSignal
from .models import NetworkSpec, TrainingConfig, TrainResult, build_model, predict_recording, train
from .nn import Network
from .ratio import RatioCalibration, calibrate, ratio_of_ratios
from .synth import OpticalModel, ProtocolSpec, Recording, simulate_recording

CORPUS_FORMAT = "spo2cam.corpus"


@dataclass
class RecordingData:
    recording_id: str
    participant_id: str
    signal: SkinColorSignal
    reference: ReferenceSeries
    boundaries: list[float]
    hand_mode: str = ""
    skin_type: str = ""

    @property
    def ref5(self) -> ReferenceSeries:
        return interpolate_reference(self.reference)


@dataclass
class Corpus:
    participants: dict[str, list[RecordingData]] = field(default_factory=dict)

    def recordings(self) -> list[RecordingData]:
        return [r for recs in self.participants.values() for r in recs]

    def filter_hand(self, hand_mode: str | None) -> "Corpus":
        if not hand_mode:
            return self
        kept = {p: [r for r in recs if r.hand_mode == hand_mode] for p, recs in self.participants.items()}
        return Corpus({p: recs for p, recs in kept.items() if recs})


def from_recording(rec: Recording) -> RecordingData:
    return RecordingData(rec.recording_id, rec.participant_id, rec.signal, rec.reference,
                         list(rec.boundaries), rec.hand_mode, rec.skin_type)


def simulate_corpus(
    n_participants: int = 1,
    recordings_per_participant: int = 2,
    model: OpticalModel | None = None,
    seed: int = 0,
    protocol: dict | None = None,
) -> Corpus:
    """Synthetic corpus; recording ``k`` of participant ``p`` uses protocol
    seed ``seed + 100 * p + k + 1``."""
    model = model or OpticalModel()
    parts = {}
    for p in range(n_participants):
        pid = f"P{p + 1:02d}"
        recs = []
        for k in range(recordings_per_participant):
            spec = ProtocolSpec(seed=seed + 100 * p + k + 1, **(protocol or {}))
            hand = "PD" if k % 2 == 0 else "PU"
            rec = simulate_recording(spec, model, pid, f"{pid}-r{k + 1}", hand_mode=hand)
            recs.append(from_recording(rec))
        parts[pid] = recs
    return Corpus(parts)


# corpus files --------------------------------------------------------------


def write_corpus(corpus: Corpus, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    listing = {}
    for pid, recs in corpus.participants.items():
        entries = []
        for r in recs:
            files = {
                "signal": f"{r.recording_id}.signal.csv",
                "reference": f"{r.recording_id}.reference.csv",
                "annotation": f"{r.recording_id}.annotation.json",
            }
            io.write_signal(r.signal, d / files["signal"])
            io.write_reference(r.reference, d / files["reference"])
            io.dump_json({
                "recording_id": r.recording_id,
                "participant_id": pid,
                "hand_mode": r.hand_mode,
                "skin_type": r.skin_type,
                "boundaries": r.boundaries,
            }, d / files["annotation"])
            entries.append({"recording_id": r.recording_id, **files})
        listing[pid] = entries
    path = d / "corpus.json"
    io.dump_json({"format": CORPUS_FORMAT, "participants": listing}, path)
    return path


def read_corpus(path) -> Corpus:
    path = Path(path)
    doc = io.load_json(path)
    if doc.get("format") != CORPUS_FORMAT:
        raise ValueError(f"{path}: not a corpus manifest")
    base = path.parent
    parts = {}
    for pid, entries in doc["participants"].items():
        recs = []
        for e in entries:
            ann = io.load_json(base / e["annotation"])
            sig = io.read_signal(base / e["signal"])
            sig.meta.update(participant_id=pid, hand_mode=ann.get("hand_mode", ""),
                            skin_type=ann.get("skin_type", ""))
            recs.append(RecordingData(
                e["recording_id"], pid, sig, io.read_reference(base / e["reference"]),
                [float(b) for b in ann["boundaries"]], ann.get("hand_mode", ""), ann.get("skin_type", ""),
            ))
        parts[pid] = recs
    return Corpus(parts)


def corpus_files(path) -> list[Path]:
    path = Path(path)
    doc = io.load_json(path)
    out = [path]
    for entries in doc["participants"].values():
        for e in entries:
            out += [path.parent / e[k] for k in ("signal", "reference", "annotation")]
    return out


# datasets -----------------------------------------------------------------


def recording_dataset(rec: RecordingData, scope: str = DEFAULT_SCOPE, align: str = "end") -> SegmentDataset:
    return window_segments(rec.signal, rec.ref5, scope=scope, align=align,
                           participant_id=rec.participant_id, hand_mode=rec.hand_mode,
                           skin_type=rec.skin_type)


def cycle_split(recs: Sequence[RecordingData], scope: str = DEFAULT_SCOPE, align: str = "end"):
    """Cycles 1-2 of every recording for training, cycle 3 for validation."""
    trains, vals = [], []
    for rec in recs:
        tr, va = split_by_cycle(recording_dataset(rec, scope, align), rec.boundaries)
        trains.append(tr)
        vals.append(va)
    return SegmentDataset.concat(trains, "train"), SegmentDataset.concat(vals, "val")


@dataclass
class Split:
    name: str
    train_recordings: list[RecordingData]
    test_recordings: list[RecordingData]


def participant_specific_splits(corpus: Corpus) -> list[Split]:
    """Per participant: first recording trains/validates, the rest are test."""
    splits = []
    for pid, recs in corpus.participants.items():
        if len(recs) < 2:
            raise EmptyDataset(f"participant {pid} needs at least two recordings")
        splits.append(Split(pid, recs[:1], recs[1:]))
    return splits


def leave_one_out(corpus: Corpus) -> list[Split]:
    return [
        Split(test, [r for p in train for r in corpus.participants[p]], corpus.participants[test])
        for train, test in leave_one_out_splits(corpus.participants)
    ]


# training -----------------------------------------------------------------


@dataclass
class InstanceResult:
    instance: int
    seed: int
    result: TrainResult
    network: Network


def _train_one(args) -> InstanceResult:
    spec, train_ds, val_ds, cfg, k = args
    net = build_model(spec)
    res = train(net, train_ds, val_ds, cfg)
    return InstanceResult(k, cfg.seed, res, net)


def train_instances(
    spec: NetworkSpec,
    train_ds: SegmentDataset,
    val_ds: SegmentDataset,
    cfg: TrainingConfig,
    n_instances: int = 1,
    jobs: int = 1,
) -> tuple[InstanceResult, list[InstanceResult]]:
    """Train ``n_instances`` seeds (``seed + k``) and keep the one with the
    lowest validation RMSE (ties to the lower instance index)."""
    if cfg.oversample_target:
        train_ds = bootstrap_oversample(train_ds, cfg.oversample_target, cfg.seed)
        val_ds = bootstrap_oversample(val_ds, cfg.oversample_target, cfg.seed + 1)
    tasks = []
    for k in range(n_instances):
        seed = cfg.seed + k
        kcfg = TrainingConfig(**{**cfg.__dict__, "seed": seed, "oversample_target": None})
        tasks.append((spec.with_(seed=seed), train_ds, val_ds, kcfg, k))
    results = parallel_map(_train_one, tasks, jobs)
    best = min(results, key=lambda r: (r.result.best_val_rmse, r.instance))
    return best, results


def parallel_map(fn: Callable, items: list, jobs: int = 1) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@dataclass
class RecordingEvaluation:
    recording_id: str
    raw: PredictionSeries
    post: PredictionSeries
    report: MetricsReport


def evaluate_network(net: Network, recs: Sequence[RecordingData], scope: str = DEFAULT_SCOPE,
                     align: str = "end") -> list[RecordingEvaluation]:
    out = []
    for rec in recs:
        raw = predict_recording(net, rec.signal, scope=scope, align=align)
        post = postprocess(raw)
        out.append(RecordingEvaluation(rec.recording_id, raw, post, metrics(post, rec.ref5)))
    return out


def metrics_rows(evals: Sequence[RecordingEvaluation]) -> list[dict]:
    return [{"recording_id": e.recording_id, **e.report.as_dict()} for e in evals]


def summarize(values: Sequence[float]) -> dict:
    from .evaluation import aggregate

    med, iqr = aggregate(values)
    return {"median": med, "iqr": iqr, "n": len(values)}


def fit_ratio_baseline(recs: Sequence[RecordingData], pair: str = "RB", align: str = "end") -> RatioCalibration:
    """Calibrate ``SpO2 = A - B * R`` on every window of the given recordings."""
    r_all, y_all = [], []
    for rec in recs:
        rs = ratio_of_ratios(rec.signal, pair=pair, align=align)
        r_all.append(rs.ratios)
        y_all.append(rec.ref5.value_at(rs.times))
    return calibrate(np.concatenate(r_all), np.concatenate(y_all))


def ratio_prediction(cal: RatioCalibration, signal: SkinColorSignal, pair: str = "RB",
                     align: str = "end") -> PredictionSeries:
    rs = ratio_of_ratios(signal, pair=pair, align=align)
    return PredictionSeries(rs.times, cal.estimate(rs.ratios), "raw")


def evaluate_ratio_baseline(cal: RatioCalibration, recs: Sequence[RecordingData], pair: str = "RB",
                            align: str = "end") -> list[RecordingEvaluation]:
    out = []
    for rec in recs:
        raw = ratio_prediction(cal, rec.signal, pair, align)
        post = postprocess(raw)
        out.append(RecordingEvaluation(rec.recording_id, raw, post, metrics(post, rec.ref5)))
    return out
