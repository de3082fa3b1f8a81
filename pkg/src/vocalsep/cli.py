"""Command-line entry points for the whole experiment lifecycle.

Every run with identical flags and seeds reproduces identical artifacts
(checkpoints, annotations, CSVs) byte for byte.

Typical headless loop:

    vocalsep synth-data --out ds --seed 1 --train 8 --hitl 4 --test 4
    vocalsep train --data ds --config desk.json --epochs 5 --seed 1 --out base.ckpt
    vocalsep annotate-sim --model base.ckpt --data ds --out ann/
    vocalsep adapt --model base.ckpt --method zero_target --annotations ann \\
        --data ds --out adapted.ckpt
    vocalsep eval --model adapted.ckpt --data ds --split test --out report.csv
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import adapt as adapt_mod
from . import data as data_mod
from . import dsp
from .annotate import load_annotations, save_annotations
from .evaluate import EvalError, emit_csv, evaluate_model
from .model import NetConfig, load_checkpoint, read_metadata, save_checkpoint
from .pipeline import PipelineConfig, separate_vocals

DEFAULT_NET = {
    "input_shape": [1024, 512],
    "depth": 6,
    "base_channels": 16,
    "kernel": 5,
    "leaky_slope": 0.2,
    "dropout_p": 0.5,
}
DEFAULT_PIPE = {"sample_rate": 22050, "hop": None}


def _log(message: str) -> None:
    ctx = click.get_current_context(silent=True)
    if ctx is None or not ctx.obj or not ctx.obj.get("quiet"):
        click.echo(message, err=True)


def _fail(message: str):
    raise click.ClickException(message)


def _load_config(path: str | None, seed: int):
    net_kw = dict(DEFAULT_NET)
    pipe_kw = dict(DEFAULT_PIPE)
    train_kw = {"lr": adapt_mod.BASE_LR, "batch_size": 16,
                "crops_per_song": adapt_mod.DEFAULT_CROPS_PER_SONG}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            _fail(f"cannot read config {path}: {exc}")
        net_kw.update(doc.get("net", {}))
        pipe_kw.update(doc.get("pipeline", {}))
        train_kw.update(doc.get("train", {}))
    net_kw["input_shape"] = tuple(net_kw["input_shape"])
    net_config = NetConfig(seed=seed, **net_kw)
    pipe = PipelineConfig.for_net(
        net_config, sample_rate=int(pipe_kw["sample_rate"]),
        hop=pipe_kw["hop"] and int(pipe_kw["hop"]),
    )
    return net_config, pipe, train_kw


def _pipeline_for_checkpoint(path: str):
    try:
        net, _ = load_checkpoint(path)
        meta = read_metadata(path)
    except Exception as exc:
        _fail(f"cannot load model {path}: {exc}")
    sample_rate = int(meta.get("sample_rate", DEFAULT_PIPE["sample_rate"]))
    hop = int(meta["hop"]) if "hop" in meta else None
    return net, PipelineConfig.for_net(net.config, sample_rate, hop)


def _load_split(data_dir: str, split: str):
    try:
        splits = data_mod.load_dataset(data_dir)
    except data_mod.DataError as exc:
        _fail(str(exc))
    by_name = {s.name: s for s in splits}
    if split not in by_name:
        _fail(f"unknown split {split!r}")
    return by_name[split], by_name


@click.group()
@click.option("--quiet", is_flag=True, help="Suppress progress logs on stderr.")
@click.pass_context
def main(ctx, quiet):
    """Singing-voice separation with human-in-the-loop adaptation."""
    ctx.ensure_object(dict)
    ctx.obj["quiet"] = quiet


@main.command("synth-data")
@click.option("--seed", type=int, default=0, show_default=True,
              help="RNG seed; the dataset is a pure function of it.")
@click.option("--out", required=True, type=click.Path(),
              help="Output dataset root directory.")
@click.option("--train", "n_train", type=int, default=8, show_default=True,
              help="Number of train songs.")
@click.option("--hitl", "n_hitl", type=int, default=4, show_default=True,
              help="Number of annotation-split songs.")
@click.option("--test", "n_test", type=int, default=4, show_default=True,
              help="Number of held-out test songs.")
@click.option("--len", "song_len", type=float, default=30.0, show_default=True,
              help="Song length in seconds (>= 10).")
@click.option("--genre", type=click.Choice(["a", "b"]), default="a",
              show_default=True, help="Accompaniment timbre family.")
@click.option("--rate", type=int, default=22050, show_default=True,
              help="Sample rate of the generated WAVs.")
def synth_data(seed, out, n_train, n_hitl, n_test, song_len, genre, rate):
    """Generate a procedural dataset with ground-truth stems."""
    try:
        data_mod.generate_procedural_dataset(
            out, seed=seed, n_train=n_train, n_hitl=n_hitl, n_test=n_test,
            song_len_s=song_len, sample_rate=rate, genre=genre,
        )
    except data_mod.DataError as exc:
        _fail(str(exc))
    _log(f"wrote {n_train + n_hitl + n_test} songs to {out}")


@main.command("train")
@click.option("--data", required=True, type=click.Path(exists=True),
              help="Dataset root.")
@click.option("--config", type=click.Path(exists=True), default=None,
              help="JSON file with net/pipeline/train settings.")
@click.option("--epochs", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(),
              help="Checkpoint output path.")
def train(data, config, epochs, seed, out):
    """Train a base model on the train split."""
    net_config, pipe, train_kw = _load_config(config, seed)
    split, _ = _load_split(data, "train")
    if len(split) == 0:
        _fail("no songs in split 'train'")
    try:
        net, history = adapt_mod.train_base(
            split, net_config, epochs=epochs, seed=seed, pipeline=pipe,
            **train_kw,
        )
    except (adapt_mod.AdaptError, data_mod.DataError) as exc:
        _fail(str(exc))
    save_checkpoint(net, out, meta={
        "sample_rate": pipe.sample_rate, "hop": pipe.stft.hop,
    })
    for i, loss in enumerate(history):
        _log(f"epoch {i}: loss {loss:.6f}")
    _log(f"saved {out}")


@main.command("separate")
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--song", required=True, type=click.Path(exists=True),
              help="Mixture WAV to separate.")
@click.option("--out", required=True, type=click.Path(),
              help="Estimated-vocals WAV output path.")
def separate(model, song, out):
    """Extract vocals from one mixture."""
    net, pipe = _pipeline_for_checkpoint(model)
    try:
        clip = dsp.load_wav(song)
        estimate = separate_vocals(net, clip, pipe)
        dsp.save_wav(estimate, out)
    except dsp.DspError as exc:
        _fail(str(exc))
    _log(f"wrote {out}")


@main.command("annotate-sim")
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--split", default="hitl", show_default=True)
@click.option("--out", required=True, type=click.Path(),
              help="Directory for per-song annotation JSON files.")
@click.option("--silence-db", type=float, default=-60.0, show_default=True,
              help="Oracle RMS below this marks a frame silent.")
@click.option("--activity-db", type=float, default=-40.0, show_default=True,
              help="Prediction RMS above this marks a frame active.")
def annotate_sim(model, data, split, out, silence_db, activity_db):
    """Mark false-positive regions using the simulated annotator."""
    net, pipe = _pipeline_for_checkpoint(model)
    target, _ = _load_split(data, split)
    if len(target) == 0:
        _fail(f"no songs in split {split!r}")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        annotations = adapt_mod.annotate_with_model(
            net, list(target.entries), pipe,
            silence_db=silence_db, activity_db=activity_db,
        )
    except (data_mod.DataError, dsp.DspError) as exc:
        _fail(str(exc))
    total = 0
    for song_id, ann in sorted(annotations.items()):
        save_annotations(ann, out_dir / f"{song_id}.json")
        total += len(ann.segments)
        _log(f"{song_id}: {len(ann.segments)} segment(s)")
    _log(f"wrote {len(annotations)} annotation files ({total} segments) to {out}")


@main.command("adapt")
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--method", type=click.Choice(["zero_target", "synthetic"]),
              default="zero_target", show_default=True)
@click.option("--annotations", "annotations_dir", required=True,
              type=click.Path(exists=True),
              help="Directory of per-song annotation JSON files.")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--exemplar-fraction", type=float, default=None,
              help="Share of train songs kept as replay exemplars "
                   "[default: 1.0 for zero_target, 0.2 for synthetic].")
@click.option("--x", type=int, default=1, show_default=True,
              help="New data points per batch.")
@click.option("--y", type=int, default=15, show_default=True,
              help="Replayed exemplars per batch.")
@click.option("--z", type=int, default=1, show_default=True,
              help="Batches per synthetic track.")
@click.option("--lr", type=float, default=adapt_mod.ADAPT_LR, show_default=True)
@click.option("--epochs", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--stride", type=int, default=None,
              help="Frame stride between zero-target windows inside a "
                   "segment [default: one window length].")
@click.option("--out", required=True, type=click.Path())
def adapt(model, method, annotations_dir, data, exemplar_fraction, x, y, z,
          lr, epochs, seed, stride, out):
    """Finetune a model on annotated false-positive regions."""
    net, pipe = _pipeline_for_checkpoint(model)
    _, by_name = _load_split(data, "train")
    train_split, hitl_split = by_name["train"], by_name["hitl"]
    try:
        cfg = adapt_mod.AdaptConfig(
            method=method, lr=lr, epochs=epochs, x=x, y=y, z=z,
            exemplar_fraction=exemplar_fraction, seed=seed,
        )
    except adapt_mod.AdaptError as exc:
        _fail(str(exc))
    _log("effective config: " + json.dumps(cfg.to_dict(), sort_keys=True))
    annotations = {}
    for path in sorted(Path(annotations_dir).glob("*.json")):
        ann = load_annotations(path)
        annotations[ann.song_id] = ann
    if not annotations:
        _fail(f"no annotation files in {annotations_dir}")
    try:
        store = data_mod.build_exemplar_store(
            train_split, pipe, fraction=cfg.effective_fraction, seed=cfg.seed,
        )
        result = adapt_mod.run_adaptation(
            net, list(hitl_split.entries), annotations, train_split, store,
            cfg, pipe, stride_frames=stride,
        )
    except (adapt_mod.AdaptError, data_mod.DataError) as exc:
        _fail(str(exc))
    for warning in result.warnings:
        _log(f"warning: {warning}")
    save_checkpoint(result.net, out, meta={
        "sample_rate": pipe.sample_rate, "hop": pipe.stft.hop,
    })
    _log(f"ran {len(result.batch_audit)} batches; saved {out}")


@main.command("eval")
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--split", default="test", show_default=True)
@click.option("--out", required=True, type=click.Path(),
              help="Framewise CSV path; summary lands next to it.")
@click.option("--baseline", is_flag=True,
              help="Score the mask=1 baseline instead of the model.")
def eval_cmd(model, data, split, out, baseline):
    """Score a model with framewise SDR and write CSV reports."""
    net, pipe = _pipeline_for_checkpoint(model)
    target, _ = _load_split(data, split)
    if len(target) == 0:
        _fail(f"no songs in split {split!r}")
    try:
        report = evaluate_model(None if baseline else net, target, pipe)
    except (EvalError, data_mod.DataError, dsp.DspError) as exc:
        _fail(str(exc))
    out = Path(out)
    summary = out.with_name(out.stem + "_summary" + (out.suffix or ".csv"))
    emit_csv(report.reports, out, summary)
    _log(f"split {split}: mean SDR {report.mean_sdr:.3f} dB, "
         f"median SDR {report.median_sdr:.3f} dB")
    _log(f"wrote {out} and {summary}")


@main.command("hitl-iterate")
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--batches", type=int, default=3, show_default=True,
              help="Number of disjoint annotation rounds.")
@click.option("--method", type=click.Choice(["zero_target", "synthetic"]),
              default="synthetic", show_default=True)
@click.option("--exemplar-fraction", type=float, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(),
              help="Directory for per-iteration checkpoints and reports.")
def hitl_iterate(model, data, batches, method, exemplar_fraction, seed, out):
    """Run the annotate/adapt/evaluate loop over disjoint song batches."""
    net, pipe = _pipeline_for_checkpoint(model)
    _, by_name = _load_split(data, "train")
    train_split, hitl_split, test_split = (
        by_name["train"], by_name["hitl"], by_name["test"])
    if len(hitl_split) < batches:
        _fail(f"cannot make {batches} disjoint batches from "
              f"{len(hitl_split)} songs")
    entries = sorted(hitl_split.entries, key=lambda e: e.song_id)
    per = len(entries) // batches
    groups = [entries[i * per: (i + 1) * per] for i in range(batches)]
    cfg = adapt_mod.AdaptConfig(method=method,
                                exemplar_fraction=exemplar_fraction, seed=seed)
    try:
        store = data_mod.build_exemplar_store(
            train_split, pipe, fraction=cfg.effective_fraction, seed=seed,
        )
        trajectory = adapt_mod.iterate_hitl(
            net, groups, train_split, test_split, store, cfg, pipe,
        )
    except (adapt_mod.AdaptError, data_mod.DataError, EvalError) as exc:
        _fail(str(exc))
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for i, (step_net, report) in enumerate(trajectory):
        save_checkpoint(step_net, out_dir / f"iteration-{i}.ckpt", meta={
            "sample_rate": pipe.sample_rate, "hop": pipe.stft.hop,
        })
        summary.append({"iteration": i, "mean_sdr": report.mean_sdr,
                        "median_sdr": report.median_sdr})
        _log(f"iteration {i}: test mean {report.mean_sdr:.3f} dB, "
             f"median {report.median_sdr:.3f} dB")
    (out_dir / "trajectory.json").write_text(
        json.dumps(summary, indent=2) + "\n")
    _log(f"wrote {out_dir}/trajectory.json")


@main.command("serve")
@click.option("--workspace", required=True, type=click.Path())
@click.option("--listen", default="127.0.0.1:8000", show_default=True,
              help="address:port to bind.")
@click.option("--data", type=click.Path(exists=True), default=None,
              help="Dataset root (initializes the workspace if needed).")
@click.option("--model", type=click.Path(exists=True), default=None,
              help="Base checkpoint (initializes the workspace if needed).")
@click.option("--ui-dir", type=click.Path(), default=None,
              help="Static frontend directory to serve at /.")
def serve(workspace, listen, data, model, ui_dir):
    """Start the annotation service."""
    import uvicorn

    from .service import ServiceError, Workspace, create_app, init_workspace

    ws_root = Path(workspace)
    try:
        if not (ws_root / "workspace.json").is_file():
            if not (data and model):
                _fail(f"{workspace} is not initialized; pass --data and --model")
            meta = read_metadata(model)
            net, _ = load_checkpoint(model)
            pipe_default = PipelineConfig.for_net(net.config)
            ws = init_workspace(
                ws_root, data, model,
                sample_rate=int(meta.get("sample_rate",
                                         pipe_default.sample_rate)),
                hop=int(meta.get("hop", pipe_default.stft.hop)),
            )
        else:
            ws = Workspace(ws_root)
    except (ServiceError, data_mod.DataError) as exc:
        _fail(str(exc))
    host, _, port = listen.rpartition(":")
    app = create_app(ws, ui_dir=ui_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))


if __name__ == "__main__":
    main()
