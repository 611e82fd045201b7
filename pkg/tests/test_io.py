import numpy as np
import pytest

from spo2cam import io
from spo2cam.dataset import ReferenceSeries, interpolate_reference, window_segments
from spo2cam.evaluation import PredictionSeries, export_weight_projection
from spo2cam.extraction import SkinColorSignal


def test_signal_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    sig = SkinColorSignal(100 + rng.normal(size=(50, 3)), 30.0, "abc", {"hand_mode": "PU"})
    io.write_signal(sig, tmp_path / "s.csv")
    back = io.read_signal(tmp_path / "s.csv")
    assert np.array_equal(back.samples, sig.samples)
    assert back.frame_rate == 30.0 and back.source_id == "abc" and back.meta == {"hand_mode": "PU"}
    assert (tmp_path / "s.csv").read_text().startswith("t,R,G,B\n0.0,")


def test_signal_without_sidecar_infers_rate(tmp_path):
    path = tmp_path / "x.csv"
    io.write_csv(path, ("t", "R", "G", "B"), [(i / 25, 1.0, 2.0, 3.0) for i in range(5)])
    assert io.read_signal(path).frame_rate == pytest.approx(25.0)


def test_wrong_header_is_rejected(tmp_path):
    path = tmp_path / "x.csv"
    io.write_csv(path, ("time", "spo2"), [(0.0, 98.0)])
    with pytest.raises(ValueError):
        io.read_reference(path)


def test_reference_and_prediction_round_trip(tmp_path):
    ref = ReferenceSeries(np.arange(6.0), np.linspace(95, 99, 6), 1.0)
    io.write_reference(ref, tmp_path / "r.csv")
    back = io.read_reference(tmp_path / "r.csv")
    assert np.array_equal(back.values, ref.values) and back.rate == 1.0
    for stage in ("raw", "postprocessed"):
        pred = PredictionSeries(np.arange(4) / 5, [97.1, 97.2, 97.3, 97.4], stage)
        io.write_prediction(pred, tmp_path / f"{stage}.csv")
        got = io.read_prediction(tmp_path / f"{stage}.csv")
        assert got.stage == stage and np.array_equal(got.values, pred.values)


def test_dataset_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    sig = SkinColorSignal(100 + rng.normal(size=(400, 3)), 30.0, "r1", {"participant_id": "P9"})
    ref5 = interpolate_reference(ReferenceSeries(np.arange(15.0), np.full(15, 97.0), 1.0))
    ds = window_segments(sig, ref5)
    io.save_dataset(ds, tmp_path / "d.npz")
    back = io.load_dataset(tmp_path / "d.npz")
    assert np.array_equal(back.data, ds.data) and list(back.participant_ids) == ["P9"] * len(ds)
    assert back.provenance == ["r1"]


def test_frames_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    frames = [rng.integers(0, 256, (6, 5, 3), dtype=np.uint8) for _ in range(3)]
    io.write_frames(frames, tmp_path / "f", 30.0, "src")
    got, meta = io.read_frames(tmp_path / "f")
    assert all(np.array_equal(a, b) for a, b in zip(frames, got))
    assert meta["frame_rate"] == 30.0 and meta["n_frames"] == 3
    io.write_frames([f.astype(float) / 3 for f in frames], tmp_path / "g", 30.0)
    got, _ = io.read_frames(tmp_path / "g")
    assert all(np.array_equal(a.astype(float) / 3, b) for a, b in zip(frames, got))


def test_projection_and_metrics_tables(tmp_path):
    tab = export_weight_projection(np.eye(3), np.array([0.1, 0.5, 0.9]))
    io.write_projection(tab, tmp_path / "p.csv")
    header, body = io.read_csv(tmp_path / "p.csv")
    assert header == ["wR", "wG", "wB", "rho"] and len(body) == 3
    io.write_metrics([{"recording_id": "a", "rho": 0.5, "mae": 1.0, "rmse": 1.5, "n": 3, "zero_variance": False}],
                     tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text() == "recording_id,rho,mae,rmse,n,zero_variance\na,0.5,1.0,1.5,3,False\n"


def test_config_hash_is_order_independent():
    assert io.config_hash({"a": 1, "b": [1, 2]}) == io.config_hash({"b": [1, 2], "a": 1})
    assert io.config_hash({"a": 1}) != io.config_hash({"a": 2})
