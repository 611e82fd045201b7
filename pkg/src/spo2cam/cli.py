"""Command-line entry point: ``spo2cam <command> [options]``.

Every command accepts ``--config FILE.json`` (keys are the long option names
with dashes replaced by underscores) and explicit flags override the file.
Each run writes a ``manifest.json`` next to its outputs recording the
resolved config, its hash, the seed, library versions and SHA-256 digests of
inputs and outputs.

Exit codes: 0 success, 1 computation failure, 2 usage or configuration
error. Failures print a JSON object ``{"error": ..., "message": ...}`` on
stderr.
"""
from __future__ import annotations

import argparse
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .errors import Spo2CamError


class UsageError(Exception):
    """Bad arguments or configuration (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# defaults per command; ``None`` means "required unless given in the config"
DEFAULTS = {
    "simulate": {"out": None, "participants": 1, "recordings": 2, "noise": 0.1, "frames": False,
                 "frame_size": 48},
    "extract": {"frames": None, "out": None, "frame_rate": None, "source_id": None, "skin_low_cr": False},
    "dataset": {"corpus": None, "out": None, "scope": "perfusion", "align": "end"},
    "train": {"corpus": None, "out": None, "model": "Model2", "protocol": "participant",
              "participant": None, "hand_mode": None, "epochs": 80, "lr": 1e-3, "batch_size": 64,
              "dropout": 0.5, "instances": 3, "oversample": None, "scope": "perfusion", "align": "end",
              "spec": None, "projection": False},
    "tune": {"corpus": None, "out": None, "model": "Model2", "participant": None, "R": 27, "eta": 3,
             "space": None, "scope": "perfusion", "align": "end", "batch_size": 64},
    "eval": {"out": None, "run": None, "prediction": None, "reference": None, "baseline": None,
             "corpus": None, "protocol": "participant", "pair": "RB", "align": "end", "hand_mode": None},
    "bayes": {"out": None, "a": None, "b": None, "metric": "rho", "a_values": None, "b_values": None,
              "rope": [-0.03, 0.03], "samples": 20000},
    "viz": {"input": None, "out": None, "reference": None},
}
COMMON = {"seed": 0, "jobs": 1}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spo2cam", description="Contactless SpO2 estimation from skin color signals.")
    p.add_argument("--version", action="version", version=f"spo2cam {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON file with option values")
        s.add_argument("--seed", type=int)
        s.add_argument("--jobs", type=int, help="worker processes for independent instances")
        return s

    s = cmd("simulate", "generate a synthetic corpus")
    s.add_argument("--out", help="output directory")
    s.add_argument("--participants", type=int)
    s.add_argument("--recordings", type=int, help="recordings per participant")
    s.add_argument("--noise", type=float, help="noise sd relative to the pulse amplitude")
    s.add_argument("--frames", action="store_const", const=True, help="also render 8-bit frame directories")
    s.add_argument("--frame-size", type=int)

    s = cmd("extract", "frame directory -> signal CSV")
    s.add_argument("--frames", help="directory of frame_*.png|ppm|npy plus metadata.json")
    s.add_argument("--out", help="output signal CSV")
    s.add_argument("--frame-rate", type=float)
    s.add_argument("--source-id")
    s.add_argument("--skin-low-cr", action="store_const", const=True,
                   help="treat the lower-Cr class as skin")

    s = cmd("dataset", "segment every recording of a corpus")
    s.add_argument("--corpus")
    s.add_argument("--out")
    s.add_argument("--scope", choices=("perfusion", "segment", "recording"))
    s.add_argument("--align", choices=("end", "center"))

    s = cmd("train", "train CNN instances under a protocol")
    s.add_argument("--corpus")
    s.add_argument("--out")
    s.add_argument("--model")
    s.add_argument("--protocol", choices=("participant", "loo"))
    s.add_argument("--participant", help="only this participant's split")
    s.add_argument("--hand-mode", help="keep only recordings with this hand mode")
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--dropout", type=float)
    s.add_argument("--instances", type=int)
    s.add_argument("--oversample", type=int, help="bootstrap train/val sets to this size")
    s.add_argument("--scope", choices=("perfusion", "segment", "recording"))
    s.add_argument("--align", choices=("end", "center"))
    s.add_argument("--spec", help="JSON file overriding network spec fields")
    s.add_argument("--projection", action="store_const", const=True,
                   help="write the RGB weight projection of every instance (Model1LinearCC)")

    s = cmd("tune", "HyperBand search on one participant")
    s.add_argument("--corpus")
    s.add_argument("--out")
    s.add_argument("--model")
    s.add_argument("--participant")
    s.add_argument("--R", type=int)
    s.add_argument("--eta", type=int)
    s.add_argument("--space", help="search-space JSON")
    s.add_argument("--scope", choices=("perfusion", "segment", "recording"))
    s.add_argument("--align", choices=("end", "center"))
    s.add_argument("--batch-size", type=int)

    s = cmd("eval", "predict and score")
    s.add_argument("--out")
    s.add_argument("--run", help="output directory of a train run")
    s.add_argument("--prediction", help="prediction CSV to score")
    s.add_argument("--reference", help="reference CSV for --prediction")
    s.add_argument("--baseline", choices=("rr",), help="evaluate the ratio-of-ratios baseline")
    s.add_argument("--corpus", help="corpus for --baseline")
    s.add_argument("--protocol", choices=("participant", "loo"))
    s.add_argument("--pair", choices=("RB", "RG"))
    s.add_argument("--align", choices=("end", "center"))
    s.add_argument("--hand-mode")

    s = cmd("bayes", "Bayesian two-group comparison")
    s.add_argument("--out")
    s.add_argument("--a", help="metrics CSV of group A")
    s.add_argument("--b", help="metrics CSV of group B")
    s.add_argument("--metric", choices=("rho", "mae", "rmse"))
    s.add_argument("--a-values", help="comma-separated values of group A")
    s.add_argument("--b-values", help="comma-separated values of group B")
    s.add_argument("--rope", type=float, nargs=2)
    s.add_argument("--samples", type=int)

    s = cmd("viz", "render a CSV artifact as SVG")
    s.add_argument("--input")
    s.add_argument("--out", help="output SVG path")
    s.add_argument("--reference", help="reference CSV to overlay on a prediction plot")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[args.command])
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} not found")
        try:
            from_file = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path}: {exc}") from exc
        if not isinstance(from_file, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(from_file) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(from_file)
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None:
            continue
        cfg[key] = val
    return cfg


def _require(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} {p} does not exist")
    return p


# manifest ----------------------------------------------------------------


# settings that do not change any computed number
HASH_EXCLUDED = ("out", "jobs")
# input locations: a file is represented by its content hash, a directory by nothing
PATH_KEYS = ("corpus", "run", "prediction", "reference", "frames", "spec", "config", "space", "a", "b", "input")


def run_hash(cfg: dict) -> str:
    """Config hash embedded in artifacts.

    Output location and worker count are left out and input paths are
    replaced by content hashes, so the same run in another directory hashes
    identically.
    """
    keyed = {}
    for k, v in cfg.items():
        if k in HASH_EXCLUDED:
            continue
        if k in PATH_KEYS and isinstance(v, (str, Path)):
            path = Path(v)
            v = io.file_hash(path) if path.is_file() else None
        keyed[k] = v
    return io.config_hash(keyed)


def _versions() -> dict:
    import scipy

    return {"spo2cam": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(path: Path, command: str, cfg: dict, inputs, outputs, base: Path) -> None:
    def rel(p):
        p = Path(p)
        try:
            return str(p.relative_to(base))
        except ValueError:
            return str(p)

    doc = {
        "command": command,
        "config": cfg,
        "config_hash": run_hash(cfg),
        "seed": cfg.get("seed"),
        "versions": _versions(),
        "inputs": {str(p): io.file_hash(p) for p in inputs},
        "outputs": {rel(p): io.file_hash(p) for p in sorted(outputs, key=str)},
    }
    io.dump_json(doc, path)


# commands -----------------------------------------------------------------


def cmd_simulate(cfg: dict) -> None:
    from .pipeline import simulate_corpus, write_corpus
    from .synth import OpticalModel, RenderSpec, render_frames

    _require(cfg, "out")
    out = Path(cfg["out"])
    if cfg["participants"] < 1 or cfg["recordings"] < 1:
        raise UsageError("--participants and --recordings must be positive")
    model = OpticalModel(noise_sd=float(cfg["noise"]))
    corpus = simulate_corpus(cfg["participants"], cfg["recordings"], model, seed=cfg["seed"])
    write_corpus(corpus, out)
    outputs = [p for p in out.iterdir() if p.is_file() and p.name != "manifest.json"]
    if cfg["frames"]:
        n = int(cfg["frame_size"])
        spec = RenderSpec(height=n, width=n, skin_box=(n // 6, n - n // 6, n // 6, n - n // 6))
        for i, rec in enumerate(corpus.recordings()):
            frames = render_frames(rec.signal, spec, seed=cfg["seed"] + i)
            fdir = out / f"{rec.recording_id}.frames"
            io.write_frames(frames, fdir, rec.signal.frame_rate, rec.recording_id)
            outputs += sorted(fdir.iterdir())
    config = {"optical": model.__dict__, "config_hash": run_hash(cfg)}
    io.dump_json(config, out / "generator.json")
    outputs.append(out / "generator.json")
    write_manifest(out / "manifest.json", "simulate", cfg, [], outputs, out)


def cmd_extract(cfg: dict) -> None:
    from .extraction import extract_skin_signal

    _require(cfg, "frames", "out")
    fdir = _existing(cfg["frames"], "frame directory")
    files = io.frame_files(fdir)
    if not files:
        raise UsageError(f"{fdir} contains no frame_* images")
    frames, meta = io.read_frames(fdir)
    rate = cfg["frame_rate"] or meta.get("frame_rate")
    if not rate:
        raise UsageError("frame rate unknown: add metadata.json or pass --frame-rate")
    sid = cfg["source_id"] or meta.get("source_id") or fdir.name
    signal = extract_skin_signal(frames, float(rate), sid, skin_high_cr=not cfg["skin_low_cr"])
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_signal(signal, out)
    side = out.with_name(out.stem + ".meta.json")
    write_manifest(out.with_name(out.stem + ".manifest.json"), "extract", cfg, files,
                   [out, side], out.parent)


def cmd_dataset(cfg: dict) -> None:
    from .dataset import assign_cycles
    from .pipeline import corpus_files, read_corpus, recording_dataset

    _require(cfg, "corpus", "out")
    corpus_path = _existing(cfg["corpus"], "corpus")
    corpus = read_corpus(corpus_path)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    outputs, listing = [], {}
    for pid, recs in corpus.participants.items():
        listing[pid] = []
        for rec in recs:
            ds = recording_dataset(rec, cfg["scope"], cfg["align"])
            ds.cycle_index = assign_cycles(ds.start_times, ds.end_times, rec.boundaries)
            stem = out / rec.recording_id
            io.save_dataset(ds, stem.with_suffix(".npz"))
            outputs += [stem.with_suffix(".npz"), stem.with_suffix(".json")]
            listing[pid].append({"recording_id": rec.recording_id, "dataset": stem.name + ".npz",
                                 "n_segments": len(ds)})
    io.dump_json({"participants": listing, "scope": cfg["scope"], "align": cfg["align"],
                  "config_hash": run_hash(cfg)}, out / "datasets.json")
    outputs.append(out / "datasets.json")
    write_manifest(out / "manifest.json", "dataset", cfg, corpus_files(corpus_path), outputs, out)


def _network_spec(cfg: dict):
    from .errors import SpecInvalid
    from .models import KINDS, NetworkSpec, default_spec

    if cfg["model"] not in KINDS:
        raise UsageError(f"unknown model {cfg['model']!r}; choose from {', '.join(KINDS)}")
    spec = default_spec(cfg["model"], cfg["seed"])
    if cfg.get("spec"):
        overrides = io.load_json(_existing(cfg["spec"], "spec file"))
        unknown = set(overrides) - set(NetworkSpec.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown spec fields: {', '.join(sorted(unknown))}")
        spec = spec.with_(**overrides)
    if cfg.get("dropout") is not None:
        spec = spec.with_(dropout=float(cfg["dropout"]))
    try:
        from .models import build_model

        build_model(spec)
    except SpecInvalid as exc:
        raise UsageError(f"invalid network spec: {exc}") from exc
    return spec


def _splits(corpus, protocol: str, participant: str | None):
    from .pipeline import leave_one_out, participant_specific_splits

    splits = participant_specific_splits(corpus) if protocol == "participant" else leave_one_out(corpus)
    if participant:
        splits = [s for s in splits if s.name == participant]
        if not splits:
            raise UsageError(f"participant {participant!r} not in corpus")
    return splits


def cmd_train(cfg: dict) -> None:
    from .evaluation import export_weight_projection
    from .models import TrainingConfig
    from .nn import checkpoint
    from .pipeline import corpus_files, cycle_split, evaluate_network, read_corpus, train_instances

    _require(cfg, "corpus", "out")
    corpus_path = _existing(cfg["corpus"], "corpus")
    spec = _network_spec(cfg)
    if cfg["instances"] < 1:
        raise UsageError("--instances must be positive")
    if cfg["projection"] and spec.kind != "Model1LinearCC":
        raise UsageError("--projection needs --model Model1LinearCC")
    try:
        tcfg = TrainingConfig(lr=float(cfg["lr"]), epochs=int(cfg["epochs"]), batch_size=int(cfg["batch_size"]),
                              oversample_target=cfg["oversample"], seed=int(cfg["seed"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    corpus = read_corpus(corpus_path).filter_hand(cfg["hand_mode"])
    splits = _splits(corpus, cfg["protocol"], cfg["participant"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    chash = run_hash(cfg)
    outputs, run_splits = [], []
    for split in splits:
        sdir = out / split.name
        sdir.mkdir(exist_ok=True)
        train_ds, val_ds = cycle_split(split.train_recordings, cfg["scope"], cfg["align"])
        best, results = train_instances(spec, train_ds, val_ds, tcfg, cfg["instances"], cfg["jobs"])
        extra = {"config_hash": chash, "instance": best.instance, "seed": best.seed,
                 "best_epoch": best.result.best_epoch, "best_val_rmse": best.result.best_val_rmse,
                 "scope": cfg["scope"], "align": cfg["align"]}
        checkpoint.save(best.network, sdir / "checkpoint.json", extra)
        io.write_history(best.result.history, sdir / "history.csv")
        io.write_csv(sdir / "instances.csv", ("instance", "seed", "best_epoch", "best_val_rmse"),
                     ((r.instance, r.seed, r.result.best_epoch, r.result.best_val_rmse) for r in results))
        io.dump_json({**spec.with_(seed=best.seed).to_dict(), "config_hash": chash}, sdir / "spec.json")
        outputs += [sdir / n for n in ("checkpoint.json", "history.csv", "instances.csv", "spec.json")]
        if cfg["projection"]:
            weights, rhos = [], []
            for r in results:
                evals = evaluate_network(r.network, split.test_recordings, cfg["scope"], cfg["align"])
                rhos.append(float(np.median([e.report.rho for e in evals])))
                weights.append(r.network.leaves()[0].params["W"].ravel())
            table = export_weight_projection(np.array(weights), np.array(rhos))
            io.write_projection(table, sdir / "projection.csv")
            io.dump_json({"direction": table.direction, "blue_red": table.blue_red,
                          "green_red": table.green_red, "n_selected": int(table.selected.sum()),
                          "config_hash": chash}, sdir / "projection.json")
            outputs += [sdir / "projection.csv", sdir / "projection.json"]
        run_splits.append({"name": split.name, "checkpoint": f"{split.name}/checkpoint.json",
                           "train": [r.recording_id for r in split.train_recordings],
                           "test": [r.recording_id for r in split.test_recordings]})
    io.dump_json({"corpus": str(corpus_path), "protocol": cfg["protocol"], "model": spec.kind,
                  "scope": cfg["scope"], "align": cfg["align"], "hand_mode": cfg["hand_mode"],
                  "splits": run_splits, "config_hash": chash}, out / "train.json")
    outputs.append(out / "train.json")
    write_manifest(out / "manifest.json", "train", cfg, corpus_files(corpus_path), outputs, out)


def cmd_tune(cfg: dict) -> None:
    from .hyperband import SearchSpace, cnn_objective, config_as_json, plan, run
    from .pipeline import corpus_files, cycle_split, read_corpus

    _require(cfg, "corpus", "out")
    corpus_path = _existing(cfg["corpus"], "corpus")
    spec = _network_spec({**cfg, "dropout": None, "spec": None})
    inputs = corpus_files(corpus_path)
    if cfg["space"]:
        inputs.append(_existing(cfg["space"], "search-space file"))
        space = SearchSpace.from_dict(io.load_json(cfg["space"]))
    else:
        space = SearchSpace()
    hb = plan(int(cfg["R"]), int(cfg["eta"]))
    corpus = read_corpus(corpus_path)
    split = _splits(corpus, "participant", cfg["participant"])[0]
    train_ds, val_ds = cycle_split(split.train_recordings, cfg["scope"], cfg["align"])
    objective = cnn_objective(spec, train_ds, val_ds, {"batch_size": int(cfg["batch_size"])}, seed=cfg["seed"])
    result = run(space, hb, objective, seed=cfg["seed"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    chash = run_hash(cfg)
    io.write_tuning_log(result.log, out / "tuning_log.csv")
    io.dump_json({"best_config": config_as_json(result.best_config), "best_val_rmse": result.best_val_rmse,
                  "best_config_id": result.best_config_id, "epochs_used": result.epochs_used,
                  "plan_budget": hb.budget, "plan": hb.table(), "participant": split.name,
                  "space": space.to_dict(), "config_hash": chash}, out / "best_config.json")
    write_manifest(out / "manifest.json", "tune", cfg, inputs,
                   [out / "tuning_log.csv", out / "best_config.json"], out)


def _write_eval(out: Path, evals, cfg: dict, extra: dict) -> list[Path]:
    from .pipeline import metrics_rows, summarize

    outputs = []
    for e in evals:
        for series, tag in ((e.raw, "raw"), (e.post, "post")):
            path = out / f"{e.recording_id}.pred_{tag}.csv"
            io.write_prediction(series, path)
            outputs.append(path)
    rows = metrics_rows(evals)
    io.write_metrics(rows, out / "metrics.csv")
    summary = {k: summarize([r[k] for r in rows]) for k in ("rho", "mae", "rmse")}
    io.dump_json({**extra, "summary": summary, "config_hash": run_hash(cfg)}, out / "summary.json")
    return outputs + [out / "metrics.csv", out / "summary.json"]


def cmd_eval(cfg: dict) -> None:
    from .dataset import interpolate_reference
    from .evaluation import metrics
    from .nn import checkpoint
    from .pipeline import (
        corpus_files,
        evaluate_network,
        evaluate_ratio_baseline,
        fit_ratio_baseline,
        read_corpus,
    )

    _require(cfg, "out")
    modes = [m for m in ("run", "prediction", "baseline") if cfg.get(m)]
    if len(modes) != 1:
        raise UsageError("give exactly one of --run, --prediction or --baseline")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)

    if cfg.get("prediction"):
        _require(cfg, "reference")
        pred_path = _existing(cfg["prediction"], "prediction")
        ref_path = _existing(cfg["reference"], "reference")
        pred = io.read_prediction(pred_path)
        ref = io.read_reference(ref_path)
        if ref.rate < 5.0:
            ref = interpolate_reference(ref, 5.0)
        report = metrics(pred, ref)
        io.write_metrics([{"recording_id": pred_path.stem, **report.as_dict()}], out / "metrics.csv")
        write_manifest(out / "manifest.json", "eval", cfg, [pred_path, ref_path], [out / "metrics.csv"], out)
        return

    if cfg.get("run"):
        run_dir = _existing(cfg["run"], "train run")
        run = io.load_json(run_dir / "train.json")
        corpus_path = Path(run["corpus"])
        corpus = read_corpus(corpus_path)
        by_id = {r.recording_id: r for r in corpus.recordings()}
        evals, inputs = [], corpus_files(corpus_path) + [run_dir / "train.json"]
        for s in run["splits"]:
            ck = run_dir / s["checkpoint"]
            inputs.append(ck)
            net = checkpoint.load(ck)
            evals += evaluate_network(net, [by_id[r] for r in s["test"]], run["scope"], run["align"])
        outputs = _write_eval(out, evals, cfg, {"model": run["model"], "protocol": run["protocol"]})
        write_manifest(out / "manifest.json", "eval", cfg, inputs, outputs, out)
        return

    _require(cfg, "corpus")
    corpus_path = _existing(cfg["corpus"], "corpus")
    corpus = read_corpus(corpus_path).filter_hand(cfg["hand_mode"])
    evals, calibrations = [], {}
    for split in _splits(corpus, cfg["protocol"], None):
        cal = fit_ratio_baseline(split.train_recordings, cfg["pair"], cfg["align"])
        calibrations[split.name] = {"intercept": cal.intercept, "slope": cal.slope}
        evals += evaluate_ratio_baseline(cal, split.test_recordings, cfg["pair"], cfg["align"])
    outputs = _write_eval(out, evals, cfg, {"model": "RR-baseline (reimplementation)",
                                            "protocol": cfg["protocol"], "calibrations": calibrations})
    write_manifest(out / "manifest.json", "eval", cfg, corpus_files(corpus_path), outputs, out)


def _group_values(path_key: str, values_key: str, cfg: dict) -> tuple[np.ndarray, list[Path]]:
    if cfg.get(values_key):
        try:
            return np.array([float(v) for v in str(cfg[values_key]).split(",") if v.strip()]), []
        except ValueError as exc:
            raise UsageError(f"--{values_key.replace('_', '-')}: {exc}") from exc
    if not cfg.get(path_key):
        raise UsageError(f"give --{path_key} or --{values_key.replace('_', '-')}")
    path = _existing(cfg[path_key], "metrics CSV")
    header, body = io.read_csv(path)
    if cfg["metric"] not in header:
        raise UsageError(f"{path} has no column {cfg['metric']!r}")
    col = header.index(cfg["metric"])
    return np.array([float(r[col]) for r in body]), [path]


def cmd_bayes(cfg: dict) -> None:
    from .bayes import best_test

    _require(cfg, "out")
    a, ia = _group_values("a", "a_values", cfg)
    b, ib = _group_values("b", "b_values", cfg)
    rope = tuple(float(x) for x in cfg["rope"])
    res = best_test(a, b, rope=rope, seed=int(cfg["seed"]), n_samples=int(cfg["samples"]))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    doc = {**res.summary(), "metric": cfg["metric"], "n_a": int(a.size), "n_b": int(b.size),
           "seed": cfg["seed"], "config_hash": run_hash(cfg)}
    io.dump_json(doc, out / "comparison.json")
    write_manifest(out / "manifest.json", "bayes", cfg, ia + ib, [out / "comparison.json"], out)


def cmd_viz(cfg: dict) -> None:
    from . import viz

    _require(cfg, "input", "out")
    src = _existing(cfg["input"], "input CSV")
    ref = _existing(cfg["reference"], "reference CSV") if cfg.get("reference") else None
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    viz.render(src, out, reference=ref, config_hash=run_hash(cfg))
    write_manifest(out.with_name(out.stem + ".manifest.json"), "viz", cfg,
                   [src] + ([ref] if ref else []), [out], out.parent)


COMMANDS = {
    "simulate": cmd_simulate,
    "extract": cmd_extract,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "tune": cmd_tune,
    "eval": cmd_eval,
    "bayes": cmd_bayes,
    "viz": cmd_viz,
}


def _fail(code: int, exc: BaseException) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    frame = getattr(exc, "frame_index", None)
    if frame is not None:
        doc["frame_index"] = frame
    config = getattr(exc, "config", None)
    if isinstance(config, dict):
        doc["config"] = config
    sys.stderr.write(json.dumps(doc, sort_keys=True, default=str) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        if cfg["jobs"] < 1:
            raise UsageError("--jobs must be at least 1")
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        return _fail(2, exc)
    except (Spo2CamError, ValueError, OSError, KeyError) as exc:
        return _fail(1, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
