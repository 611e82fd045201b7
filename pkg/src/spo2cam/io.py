"""File formats shared by the command-line tools.

CSV floats are written with ``repr`` so that a value read back is the same
double and reruns produce identical bytes. JSON is written with sorted keys.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset import ReferenceSeries, SegmentDataset
from .evaluation import PredictionSeries
from .extraction import SkinColorSignal

FRAME_SUFFIXES = (".png", ".ppm", ".npy")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path, expected: Sequence[str] | None = None) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header, body = rows[0], [r for r in rows[1:] if r]
    if expected is not None and list(header) != list(expected):
        raise ValueError(f"{path}: expected header {','.join(expected)}, got {','.join(header)}")
    return header, body


def _columns(body: list[list[str]], n: int) -> np.ndarray:
    if not body:
        return np.zeros((0, n))
    return np.array([[float(x) for x in row] for row in body])


def dump_json(obj, path) -> None:
    Path(path).write_text(canonical_json(obj) + "\n")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def load_json(path):
    return json.loads(Path(path).read_text())


def config_hash(config) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=_json_default).encode()).hexdigest()[:16]


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# signals and series ----------------------------------------------------------


def write_signal(signal: SkinColorSignal, path) -> None:
    t = signal.times
    write_csv(path, ("t", "R", "G", "B"), ((t[i], *signal.samples[i]) for i in range(len(signal))))
    meta = {"frame_rate": signal.frame_rate, "source_id": signal.source_id, "meta": signal.meta}
    dump_json(meta, _sidecar(path))


def read_signal(path, frame_rate: float | None = None, source_id: str | None = None) -> SkinColorSignal:
    _, body = read_csv(path, ("t", "R", "G", "B"))
    arr = _columns(body, 4)
    side = _sidecar(path)
    meta = load_json(side) if side.exists() else {}
    if frame_rate is None:
        frame_rate = meta.get("frame_rate")
        if frame_rate is None:
            if arr.shape[0] < 2:
                raise ValueError(f"{path}: cannot infer frame rate")
            frame_rate = 1.0 / float(np.median(np.diff(arr[:, 0])))
    sid = source_id if source_id is not None else meta.get("source_id", Path(path).stem)
    return SkinColorSignal(arr[:, 1:], float(frame_rate), sid, dict(meta.get("meta", {})))


def _sidecar(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".meta.json")


def write_reference(ref: ReferenceSeries, path) -> None:
    write_csv(path, ("t", "spo2"), zip(ref.times, ref.values))


def read_reference(path, rate: float | None = None) -> ReferenceSeries:
    _, body = read_csv(path, ("t", "spo2"))
    arr = _columns(body, 2)
    if rate is None:
        rate = 1.0 / float(np.median(np.diff(arr[:, 0]))) if arr.shape[0] > 1 else 1.0
    return ReferenceSeries(arr[:, 0], arr[:, 1], float(rate))


PREDICTION_COLUMNS = {"raw": "spo2_raw", "postprocessed": "spo2"}


def write_prediction(pred: PredictionSeries, path) -> None:
    write_csv(path, ("t", PREDICTION_COLUMNS[pred.stage]), zip(pred.times, pred.values))


def read_prediction(path) -> PredictionSeries:
    header, body = read_csv(path)
    stages = {v: k for k, v in PREDICTION_COLUMNS.items()}
    if len(header) != 2 or header[0] != "t" or header[1] not in stages:
        raise ValueError(f"{path}: expected header t,spo2_raw or t,spo2")
    arr = _columns(body, 2)
    return PredictionSeries(arr[:, 0], arr[:, 1], stages[header[1]])


def write_history(history: list[dict], path) -> None:
    write_csv(path, ("epoch", "train_rmse", "val_rmse"),
              ((h["epoch"], h["train_rmse"], h["val_rmse"]) for h in history))


def write_tuning_log(records, path) -> None:
    write_csv(path, ("bracket", "rung", "config_id", "epochs", "val_rmse"),
              ((r.bracket, r.rung, r.config_id, r.epochs, r.val_rmse) for r in records))


def write_projection(table, path) -> None:
    write_csv(path, ("wR", "wG", "wB", "rho"), table.rows.tolist())


def write_metrics(rows: list[dict], path) -> None:
    """Per-recording metrics rows with keys recording_id, rho, mae, rmse, n, zero_variance."""
    cols = ("recording_id", "rho", "mae", "rmse", "n", "zero_variance")
    write_csv(path, cols, ([r[c] for c in cols] for r in rows))


# datasets ------------------------------------------------------------------


def save_dataset(ds: SegmentDataset, path) -> None:
    """Segments and labels in an ``.npz`` archive plus a JSON manifest."""
    path = Path(path)
    np.savez(
        path,
        data=ds.data,
        labels=ds.labels,
        start_times=ds.start_times,
        end_times=ds.end_times,
        cycle_index=ds.cycle_index,
        participant_ids=ds.participant_ids.astype(str),
        recording_ids=ds.recording_ids.astype(str),
        hand_mode=ds.hand_mode.astype(str),
        skin_type=ds.skin_type.astype(str),
    )
    manifest = {
        "n_segments": len(ds),
        "shape": list(ds.data.shape),
        "provenance": list(ds.provenance),
        "split_tag": ds.split_tag,
        "label_range": [float(ds.labels.min()), float(ds.labels.max())] if len(ds) else None,
    }
    dump_json(manifest, path.with_suffix(".json"))


def load_dataset(path) -> SegmentDataset:
    path = Path(path)
    npz = path if path.suffix == ".npz" else path.with_suffix(".npz")
    man_path = npz.with_suffix(".json")
    manifest = load_json(man_path) if man_path.exists() else {}
    with np.load(npz, allow_pickle=False) as z:
        return SegmentDataset(
            data=z["data"],
            labels=z["labels"],
            start_times=z["start_times"],
            end_times=z["end_times"],
            participant_ids=z["participant_ids"].astype(object),
            recording_ids=z["recording_ids"].astype(object),
            cycle_index=z["cycle_index"],
            hand_mode=z["hand_mode"].astype(object),
            skin_type=z["skin_type"].astype(object),
            provenance=list(manifest.get("provenance", [])),
            split_tag=manifest.get("split_tag", ""),
        )


# frame directories -------------------------------------------------------------


def write_frames(frames: Sequence[np.ndarray], directory, frame_rate: float, source_id: str = "",
                 fmt: str = "png") -> None:
    """Write ``frame_00000.<fmt>`` files plus ``metadata.json``.

    8-bit frames go to PNG or PPM through Pillow; float frames are stored as
    ``.npy`` so no quantization happens.
    """
    from PIL import Image

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(len(frames))))
    for i, frame in enumerate(frames):
        stem = d / f"frame_{i:0{width}d}"
        if frame.dtype == np.uint8:
            if fmt not in ("png", "ppm"):
                raise ValueError(f"unsupported image format {fmt!r}")
            Image.fromarray(frame, "RGB").save(stem.with_suffix("." + fmt))
        else:
            np.save(stem.with_suffix(".npy"), frame)
    dump_json({"frame_rate": frame_rate, "source_id": source_id, "n_frames": len(frames)},
              d / "metadata.json")


def frame_files(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d} is not a directory")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in FRAME_SUFFIXES and p.stem.startswith("frame_"))


def read_frames(directory) -> tuple[Iterable[np.ndarray], dict]:
    """Lazily load frames in file-name order; returns ``(frames, metadata)``."""
    from PIL import Image

    d = Path(directory)
    files = frame_files(d)
    meta_path = d / "metadata.json"
    meta = load_json(meta_path) if meta_path.exists() else {}
    meta.setdefault("n_frames", len(files))

    def gen():
        for f in files:
            if f.suffix == ".npy":
                yield np.load(f)
            else:
                with Image.open(f) as im:
                    yield np.asarray(im.convert("RGB"))

    return gen(), meta
