import json

import numpy as np
import pytest

from spo2cam import io
from spo2cam.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    err = capsys.readouterr().err
    return code, (json.loads(err.strip().splitlines()[-1]) if err.strip() else None)


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--out", str(out), "--noise", "0.1", "--seed", "2"]) == 0
    return out


@pytest.fixture(scope="module")
def trained(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert main(["train", "--corpus", str(corpus_dir / "corpus.json"), "--out", str(out), "--model", "Model3",
                 "--epochs", "2", "--instances", "2", "--seed", "1"]) == 0
    return out


def test_simulate_writes_corpus_and_manifest(corpus_dir):
    man = io.load_json(corpus_dir / "manifest.json")
    assert man["command"] == "simulate" and man["seed"] == 2
    assert man["config_hash"] == io.config_hash({k: v for k, v in man["config"].items() if k not in ("out", "jobs")})
    assert "corpus.json" in man["outputs"] and "P01-r2.signal.csv" in man["outputs"]
    assert io.load_json(corpus_dir / "generator.json")["config_hash"] == man["config_hash"]


def test_train_artifacts(trained):
    run_doc = io.load_json(trained / "train.json")
    assert run_doc["model"] == "Model3" and run_doc["splits"][0]["test"] == ["P01-r2"]
    header, body = io.read_csv(trained / "P01" / "history.csv")
    assert header == ["epoch", "train_rmse", "val_rmse"] and len(body) == 2
    assert (trained / "P01" / "checkpoint.json").exists()


def test_eval_run_and_rerun_is_byte_identical(trained, corpus_dir, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "eval", "--run", trained, "--out", a)[0] == 0
    assert run(capsys, "eval", "--run", trained, "--out", b)[0] == 0
    for name in ("metrics.csv", "P01-r2.pred_raw.csv", "P01-r2.pred_post.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    header, body = io.read_csv(a / "metrics.csv")
    assert header == ["recording_id", "rho", "mae", "rmse", "n", "zero_variance"] and body[0][0] == "P01-r2"


def test_train_rerun_is_byte_identical(corpus_dir, trained, tmp_path):
    out = tmp_path / "again"
    assert main(["train", "--corpus", str(corpus_dir / "corpus.json"), "--out", str(out), "--model", "Model3",
                 "--epochs", "2", "--instances", "2", "--seed", "1"]) == 0
    for name in ("P01/checkpoint.json", "P01/history.csv", "P01/instances.csv"):
        assert (out / name).read_bytes() == (trained / name).read_bytes()


def test_eval_mismatched_timestamps_exit_1(trained, corpus_dir, tmp_path, capsys):
    ev = tmp_path / "ev"
    run(capsys, "eval", "--run", trained, "--out", ev)
    pred = io.read_prediction(ev / "P01-r2.pred_post.csv")
    pred.times = pred.times + 0.1
    io.write_prediction(pred, tmp_path / "shifted.csv")
    code, err = run(capsys, "eval", "--prediction", tmp_path / "shifted.csv",
                    "--reference", corpus_dir / "P01-r2.reference.csv", "--out", tmp_path / "e2")
    assert code == 1 and err["error"] == "NoOverlap" and err["exit_code"] == 1


def test_eval_prediction_against_1hz_reference(trained, corpus_dir, tmp_path, capsys):
    ev = tmp_path / "ev"
    run(capsys, "eval", "--run", trained, "--out", ev)
    code, _ = run(capsys, "eval", "--prediction", ev / "P01-r2.pred_post.csv",
                  "--reference", corpus_dir / "P01-r2.reference.csv", "--out", tmp_path / "e3")
    assert code == 0
    a = io.read_csv(tmp_path / "e3" / "metrics.csv")[1][0]
    b = io.read_csv(ev / "metrics.csv")[1][0]
    assert a[1:] == b[1:]


def test_ratio_baseline_eval(corpus_dir, tmp_path, capsys):
    code, _ = run(capsys, "eval", "--baseline", "rr", "--corpus", corpus_dir / "corpus.json", "--out", tmp_path)
    assert code == 0
    summary = io.load_json(tmp_path / "summary.json")
    assert summary["summary"]["rho"]["n"] == 1


def test_dataset_command(corpus_dir, tmp_path, capsys):
    assert run(capsys, "dataset", "--corpus", corpus_dir / "corpus.json", "--out", tmp_path)[0] == 0
    ds = io.load_dataset(tmp_path / "P01-r1.npz")
    assert ds.data.shape[1:] == (3, 300) and set(ds.cycle_index) <= {0, 1, 2, 3}


def test_bayes_command(tmp_path, capsys):
    rng = np.random.default_rng(0)
    a = ",".join(str(v) for v in rng.normal(0, 0.3, 21))
    b = ",".join(str(v) for v in rng.normal(3, 0.3, 21))
    code, _ = run(capsys, "bayes", "--a-values", a, "--b-values", b, "--out", tmp_path)
    assert code == 0
    files = {p.name for p in tmp_path.iterdir()}
    assert "manifest.json" in files
    code, err = run(capsys, "bayes", "--a-values", "1.0", "--b-values", b, "--out", tmp_path / "x")
    assert code == 1 and err["error"] == "TooFewSamples"


def test_viz_command(trained, tmp_path, capsys):
    out = tmp_path / "h.svg"
    assert run(capsys, "viz", "--input", trained / "P01" / "history.csv", "--out", out)[0] == 0
    first = out.read_bytes()
    assert first.startswith(b"<?xml")
    assert run(capsys, "viz", "--input", trained / "P01" / "history.csv", "--out", out)[0] == 0
    assert out.read_bytes() == first


def test_extract_round_trip_from_rendered_frames(tmp_path, capsys):
    sim = tmp_path / "sim"
    assert run(capsys, "simulate", "--out", sim, "--recordings", "1", "--noise", "0", "--frames",
               "--frame-size", "24")[0] == 0
    code, _ = run(capsys, "extract", "--frames", sim / "P01-r1.frames", "--out", tmp_path / "sig.csv")
    assert code == 0
    got = io.read_signal(tmp_path / "sig.csv")
    want = io.read_signal(sim / "P01-r1.signal.csv")
    assert len(got) == len(want)
    assert np.max(np.abs(got.samples - want.samples)) <= 0.5 / 255


def test_usage_errors_exit_2(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    code, err = run(capsys, "extract", "--frames", tmp_path / "empty", "--out", tmp_path / "s.csv")
    assert code == 2 and err["exit_code"] == 2
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "train", "--out", tmp_path)[0] == 2
    cfg = tmp_path / "c.json"
    cfg.write_text('{"bogus": 1}')
    assert run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "o")[0] == 2
    assert run(capsys, "train", "--corpus", tmp_path / "nope.json", "--out", tmp_path)[0] == 2


def test_flags_override_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"noise": 0.5, "seed": 4, "participants": 1, "recordings": 2}))
    assert run(capsys, "simulate", "--config", cfg, "--noise", "0.0", "--out", tmp_path / "o")[0] == 0
    man = io.load_json(tmp_path / "o" / "manifest.json")
    assert man["config"]["noise"] == 0.0 and man["config"]["seed"] == 4
