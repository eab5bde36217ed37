"""Command-line interface for the full pipeline.

Subcommands: synth (generate a synthetic dataset), prepare (CSV recordings
-> windowed binary dataset), train, eval, predict, gradcheck.  Progress and
warnings go to standard error; machine-readable artifacts (config echo,
history CSV, checkpoints, JSON reports) go to files.  Exit codes: 0 on
success, 1 on check/training failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import gradcheck, synth, training
from .models import FUSIONS, ModelConfig
from .training import TrainConfig

log = logging.getLogger("eegnet")

# CLI architecture names; rnn64/rnn16 pin the baseline LSTM hidden size.
CLI_ARCHES = ("cascade", "parallel", "cnn1d", "cnn2d", "cnn3d", "rnn64", "rnn16")


def _threads() -> int:
    value = os.environ.get("EEGNET_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        log.warning("ignoring invalid EEGNET_THREADS=%r", value)
        return 1


def _model_defaults(arch: str) -> dict:
    if arch == "cascade":
        return {"arch": "cascade", "hidden": 64}
    if arch == "parallel":
        return {"arch": "parallel", "hidden": 16}
    if arch == "rnn64":
        return {"arch": "rnn", "hidden": 64}
    if arch == "rnn16":
        return {"arch": "rnn", "hidden": 16}
    return {"arch": arch, "hidden": 64}


_MODEL_FIELDS = set(ModelConfig.__dataclass_fields__)
_TRAIN_FIELDS = set(TrainConfig.__dataclass_fields__)


def _build_run_config(args) -> dict:
    """Merge defaults <- config file <- CLI flags into one flat mapping."""
    merged: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        with open(path) as fh:
            merged.update(json.load(fh))
    overrides = {
        "arch": args.arch,
        "fusion": args.fusion,
        "conv_depth": args.conv_depth,
        "lstm_depth": args.lstm_depth,
        "window": args.window_size,
        "seed": args.seed,
        "epochs": args.epochs,
        "batch_size": args.batch,
        "learning_rate": args.lr,
        "keep_prob": args.keep_prob,
        "hidden": args.hidden,
        "fc_width": args.fc_width,
        "data": args.data,
        "out_dir": args.out,
    }
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if "arch" not in merged:
        raise UsageError("an architecture is required (--arch or config file)")
    return merged


def _split_run_config(merged: dict):
    arch_defaults = _model_defaults(merged["arch"])
    model_kw = dict(arch_defaults)
    for key, value in merged.items():
        if key == "arch":
            continue
        if key in _MODEL_FIELDS:
            model_kw[key] = tuple(value) if key == "conv_maps" else value
    train_kw = {k: v for k, v in merged.items() if k in _TRAIN_FIELDS and k != "seed"}
    train_kw["seed"] = merged.get("seed", 0)
    return ModelConfig(**model_kw), TrainConfig(**train_kw)


class UsageError(Exception):
    pass


class ConfigMismatch(Exception):
    """Config/dataset mismatch: descriptive failure, exit code 1."""


def _echo_config(out_dir: Path, model_config: ModelConfig, train_config: TrainConfig,
                 data: str) -> dict:
    effective = dict(asdict(model_config))
    effective["conv_maps"] = list(effective["conv_maps"])
    for key, value in asdict(train_config).items():
        effective[key] = value
    effective["arch"] = {
        ("rnn", 64): "rnn64", ("rnn", 16): "rnn16",
    }.get((model_config.arch, model_config.hidden), model_config.arch)
    effective["data"] = data
    effective["out_dir"] = str(out_dir)
    blob = json.dumps(effective, indent=1)
    (out_dir / "config.json").write_text(blob + "\n")
    print(blob, file=sys.stderr)
    return effective


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    if args.spec:
        path = Path(args.spec)
        if not path.exists():
            raise UsageError(f"spec file not found: {path}")
        with open(path) as fh:
            doc = json.load(fh)
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.noise is not None:
            doc["noise"] = args.noise
        if args.windows_per_class is not None:
            doc["windows_per_class"] = args.windows_per_class
        try:
            spec = synth.spec_from_dict(doc)
        except (KeyError, ValueError, TypeError) as exc:
            raise UsageError(f"invalid synthetic spec: {exc}") from exc
    else:
        spec = synth.default_spec(
            windows_per_class=args.windows_per_class or 400,
            noise=0.25 if args.noise is None else args.noise,
            seed=args.seed or 0,
        )
    manifest, recordings = synth.synth_dataset(spec)
    out = Path(args.out)
    (out / "recordings").mkdir(parents=True, exist_ok=True)
    for entry, rec in zip(manifest.recordings, recordings):
        ds.save_recording_csv(out / entry.path, rec.samples)
    ds.save_manifest(out / "manifest.json", manifest)
    log.info("wrote %d recordings for %d classes under %s",
             len(recordings), manifest.n_classes, out)
    print(f"synthetic dataset: {len(recordings)} recordings, "
          f"{manifest.n_classes} classes -> {out / 'manifest.json'}")
    return 0


def cmd_prepare(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise UsageError(f"manifest not found: {manifest_path}")
    manifest = ds.load_manifest(manifest_path)
    try:
        prepared = ds.prepare_dataset(
            manifest, window=args.window_size or 10,
            ratio=args.ratio, seed=args.seed, threads=_threads(),
        )
    except ds.DatasetError as exc:
        log.error("%s", exc)
        return 1
    ds.save_prepared(args.out, prepared)
    per_class = np.bincount(prepared.labels, minlength=prepared.n_classes)
    split = prepared.meta["split"]
    print(f"recordings: {len(manifest.recordings)} "
          f"(skipped {len(prepared.meta['skipped'])})")
    print(f"windows: {prepared.count} (train {len(split['train'])}, "
          f"test {len(split['test'])})")
    for label, name in sorted(prepared.label_names.items()):
        print(f"  class {label} ({name}): {per_class[label]}")
    print(f"prepared dataset -> {args.out}")
    return 0


def cmd_train(args) -> int:
    merged = _build_run_config(args)
    data = merged.get("data")
    if not data:
        raise UsageError("a prepared dataset is required (--data or config file)")
    if not Path(data).exists():
        raise UsageError(f"prepared dataset not found: {data}")
    out_dir = Path(merged.get("out_dir") or "run")
    out_dir.mkdir(parents=True, exist_ok=True)

    prepared = ds.load_prepared(data)
    model_config, train_config = _split_run_config(merged)
    if model_config.window != prepared.window:
        raise ConfigMismatch(
            f"config window {model_config.window} does not match dataset window "
            f"{prepared.window}"
        )
    if model_config.classes != prepared.n_classes:
        raise ConfigMismatch(
            f"config classes {model_config.classes} does not match dataset classes "
            f"{prepared.n_classes}"
        )
    _echo_config(out_dir, model_config, train_config, data)
    train_set, test_set = prepared.train_test()
    log.info("training %s on %d windows (%d test)", model_config.arch,
             train_set.count, test_set.count)
    started = time.monotonic()
    try:
        result = training.train(model_config, train_config, train_set, test_set)
    except training.TrainingDiverged as exc:
        log.error("training aborted: %s", exc)
        return 1
    elapsed = time.monotonic() - started
    metrics = training.evaluate(result.params, test_set)
    training.write_history(out_dir / "history.csv", result.history)
    training.save_checkpoint(
        out_dir / "checkpoint.eegc", model_config, train_config, result.params,
        result.adam_state, epoch=result.history[-1].epoch if result.history else 0,
        rng=result.rng, history=result.history, metrics=metrics,
    )
    log.info("finished %d epochs in %.1fs", len(result.history), elapsed)
    print(f"final test accuracy: {metrics.accuracy:.4f}")
    print(f"checkpoint -> {out_dir / 'checkpoint.eegc'}")
    print(f"history -> {out_dir / 'history.csv'}")
    return 0


def _load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise UsageError(f"checkpoint not found: {path}")
    return training.load_checkpoint(path)


def _select_split(prepared: ds.PreparedDataset, which: str) -> ds.PreparedDataset:
    if which == "all":
        return prepared
    train_set, test_set = prepared.train_test()
    return train_set if which == "train" else test_set


def _format_metrics(metrics: training.Metrics, label_names: dict) -> str:
    lines = [f"accuracy: {metrics.accuracy:.4f}",
             f"mean loss: {metrics.mean_loss:.4f}"]
    lines.append(f"{'class':<24} {'precision':>9} {'recall':>9} {'f1':>9}")
    for k in range(len(metrics.precision)):
        name = label_names.get(k, str(k))
        lines.append(f"{k} {name:<22} {metrics.precision[k]:>9.4f} "
                     f"{metrics.recall[k]:>9.4f} {metrics.f1[k]:>9.4f}")
    lines.append("confusion matrix (rows = true, cols = predicted):")
    for row in metrics.confusion:
        lines.append("  " + " ".join(f"{v:>6d}" for v in row))
    return "\n".join(lines)


def cmd_eval(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    if not Path(args.data).exists():
        raise UsageError(f"prepared dataset not found: {args.data}")
    prepared = ds.load_prepared(args.data)
    if prepared.window != ckpt.model_config.window:
        log.error("dataset window %d does not match checkpoint window %d",
                  prepared.window, ckpt.model_config.window)
        return 1
    subset = _select_split(prepared, args.split)
    metrics = training.evaluate(ckpt.params, subset)
    print(_format_metrics(metrics, prepared.label_names))
    if args.json_out:
        report = {"split": args.split, "count": subset.count, **metrics.to_dict()}
        Path(args.json_out).write_text(json.dumps(report, indent=1) + "\n")
        log.info("json report -> %s", args.json_out)
    return 0


def cmd_predict(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    if not Path(args.windows).exists():
        raise UsageError(f"prepared dataset not found: {args.windows}")
    prepared = ds.load_prepared(args.windows)
    names = prepared.label_names
    for i in range(prepared.count):
        probs, cls = training.predict(ckpt.params, prepared.raw[i], prepared.meshes[i])
        rendered = " ".join(repr(float(p)) for p in probs)
        print(f"window {i}: class={cls} ({names.get(cls, cls)}) probs=[{rendered}]")
    return 0


def cmd_gradcheck(args) -> int:
    try:
        results = gradcheck.run_checks(only=args.op, seed=args.seed or 0)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.name}: max rel err {res.max_rel_err:.3e} "
              f"(tolerance {res.tolerance:.0e})")
        failed += not res.passed
    if failed:
        print(f"{failed} gradient check(s) failed", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--arch", choices=CLI_ARCHES, help="architecture to train")
    p.add_argument("--fusion", choices=FUSIONS, help="parallel-model fusion method")
    p.add_argument("--conv-depth", dest="conv_depth", type=int, choices=(1, 2, 3))
    p.add_argument("--lstm-depth", dest="lstm_depth", type=int, choices=(1, 2))
    p.add_argument("--window-size", dest="window_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON run config; flags override its fields")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", dest="lr", type=float, help="Adam learning rate")
    p.add_argument("--keep-prob", dest="keep_prob", type=float)
    p.add_argument("--hidden", type=int, help="LSTM hidden size override")
    p.add_argument("--fc-width", dest="fc_width", type=int)
    p.add_argument("--data", help="prepared dataset (EEGW file)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eegnet",
        description="EEG intention recognition: mesh transform, windowing, "
                    "convolutional-recurrent models, training and verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--spec", help="JSON synthetic spec (defaults to the 5-class spec)")
    p.add_argument("--seed", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--windows-per-class", dest="windows_per_class", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="ingest recordings into a windowed dataset")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--out", required=True, help="output EEGW file")
    p.add_argument("--window-size", dest="window_size", type=int, default=10)
    p.add_argument("--ratio", type=float, help="train fraction override")
    p.add_argument("--seed", type=int, help="split seed override")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train an architecture on a prepared dataset")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="prepared dataset (EEGW file)")
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--json-out", dest="json_out", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="per-window probabilities from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--windows", required=True, help="prepared dataset (EEGW file)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference verification suite")
    p.add_argument("--op", help="restrict to checks whose name starts with this")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ds.DatasetError, training.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
