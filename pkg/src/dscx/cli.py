"""``dscx`` command line: heatmap, synth, train, eval, predict.

Exit codes: 0 success, 2 parse error, 3 I/O error, 4 non-finite loss,
5 checkpoint mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from dscx.data.manifest import ManifestError, load_samples, read_manifest
from dscx.data.metrics import ConfusionMatrix, accuracy_report, format_table
from dscx.data.splits import kfold, stratified_split
from dscx.data.synth import SynthConfig, synth_dataset
from dscx.errors import CheckpointMismatch, EmptyDataset, InvalidConfig, NonFiniteLoss
from dscx.heatmap import DetectionParseError, read_keyframes, render_heatmap, write_pgm
from dscx.nn import checkpoint
from dscx.pipeline import TrainConfig, build_model, format_history, load_train_config, predict_batch, train

log = logging.getLogger("dscx")

EXIT_OK, EXIT_PARSE, EXIT_IO, EXIT_NUMERIC, EXIT_CHECKPOINT = 0, 2, 3, 4, 5


def _config(args) -> TrainConfig:
    cfg = load_train_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _samples(path):
    samples, dropped = load_samples(read_manifest(path))
    if dropped:
        print(f"dropped {len(dropped)} unreadable sample(s)", file=sys.stderr)
    if not samples:
        raise EmptyDataset(f"{path}: no usable samples")
    return samples


def _evaluate(samples, model) -> ConfusionMatrix:
    preds, errors = predict_batch(samples, model)
    for i, exc in errors.items():
        print(f"{samples[i].sample_id}: {exc}", file=sys.stderr)
    pairs = [(s.label, p.predicted_class) for s, p in zip(samples, preds) if p is not None and s.label is not None]
    return ConfusionMatrix.from_predictions([t for t, _ in pairs], [p for _, p in pairs])


# -- subcommands ------------------------------------------------------------------------


def cmd_heatmap(args) -> int:
    frames = read_keyframes(args.detections)
    if args.frame is None:
        dets = frames[0][1] if frames else []
    else:
        match = [boxes for f, boxes in frames if f == args.frame]
        if not match:
            raise DetectionParseError(f"frame {args.frame} not in {args.detections}")
        dets = match[0]
    hm = render_heatmap(dets, args.width, args.height)
    write_pgm(args.out, hm)
    print(repr(hm.total_intensity) if hm.total_intensity else "0")
    return EXIT_OK


def cmd_synth(args) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.counts:
        counts = tuple(int(c) for c in args.counts.split(","))
        cfg = SynthConfig(counts=counts, seed=seed)
    else:
        cfg = SynthConfig.from_total(args.total, seed=seed)
    manifest = synth_dataset(cfg, args.out)
    print(f"wrote {len(manifest)} samples to {Path(args.out) / 'manifest.csv'}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    samples = _samples(args.manifest)
    tr, va = stratified_split(samples, seed=cfg.seed)
    history_path = Path(args.history) if args.history else Path(str(args.out) + ".history.csv")
    records = []

    def on_epoch(rec):
        records.append(rec)
        history_path.write_text(format_history(records), encoding="utf-8")
        print(f"epoch {rec.epoch}: train_loss {rec.train_loss:.5f} val_acc {rec.val_acc:.4f}")

    result = train([samples[i] for i in tr], [samples[i] for i in va], cfg, args.out, on_epoch)
    history_path.write_text(format_history(result.history), encoding="utf-8")
    print(f"best epoch {result.best_epoch}, val_acc {result.best_val_acc:.4f}; checkpoint {args.out}")
    return EXIT_OK


def _load_model(args, cfg):
    model = build_model(cfg)
    checkpoint.load_into(model, Path(args.checkpoint).read_bytes())
    return model


def _report(cm: ConfusionMatrix, metrics_path) -> None:
    report = accuracy_report(cm)
    print(format_table(cm, report), end="")
    if metrics_path:
        Path(metrics_path).write_text(report.to_json(cm), encoding="utf-8")


def cmd_eval(args) -> int:
    if args.confusion:
        raw = json.loads(Path(args.confusion).read_text(encoding="utf-8"))
        counts = raw["confusion"] if isinstance(raw, dict) else raw
        _report(ConfusionMatrix(np.array(counts)), args.metrics)
        return EXIT_OK
    if args.manifest is None:
        raise InvalidConfig("eval needs --manifest (or --confusion)")
    cfg = _config(args)
    samples = _samples(args.manifest)
    if args.kfold:
        return _kfold(samples, cfg, args)
    if args.checkpoint is None:
        raise InvalidConfig("eval needs --checkpoint unless --kfold is given")
    model = _load_model(args, cfg)
    if args.split == "val":
        _, va = stratified_split(samples, seed=cfg.seed)
        samples = [samples[i] for i in va]
    _report(_evaluate(samples, model), args.metrics)
    return EXIT_OK


def _kfold(samples, cfg, args) -> int:
    total = None
    accs = []
    for f, (tr, va) in enumerate(kfold(samples, k=args.kfold, seed=cfg.seed), 1):
        result = train([samples[i] for i in tr], [samples[i] for i in va], cfg)
        cm = _evaluate([samples[i] for i in va], result.model)
        acc = accuracy_report(cm).overall
        accs.append(acc)
        total = cm if total is None else total + cm
        print(f"fold {f}: accuracy {100 * acc:.2f}%")
    print(f"mean fold accuracy: {100 * float(np.mean(accs)):.2f}%")
    _report(total, args.metrics)
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _config(args)
    samples = _samples(args.manifest)
    if args.moving_only:
        samples = [s for s in samples if s.moving]
    model = _load_model(args, cfg)
    preds, errors = predict_batch(samples, model)
    lines = ["sample_id,predicted_class," + ",".join(f"p{c}" for c in range(5))]
    for s, p in zip(samples, preds):
        if p is None:
            continue
        lines.append(f"{s.sample_id},{p.predicted_class}," + ",".join(f"{v:.6f}" for v in p.probabilities))
    for i, exc in errors.items():
        print(f"{samples[i].sample_id}: {exc}", file=sys.stderr)
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed (all randomness flows from it)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="dscx", description="Driving-scene complexity from detections and vehicle dynamics.")
    sub = p.add_subparsers(dest="command", required=True)

    h = sub.add_parser("heatmap", parents=[common], help="render one detection frame to a 16-bit PGM")
    h.add_argument("detections", help="detection JSONL")
    h.add_argument("--out", required=True)
    h.add_argument("--width", type=int, default=256)
    h.add_argument("--height", type=int, default=144)
    h.add_argument("--frame", type=int, default=None, help="frame number (default: first line)")
    h.set_defaults(func=cmd_heatmap)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic labelled dataset")
    s.add_argument("--out", required=True)
    group = s.add_mutually_exclusive_group()
    group.add_argument("--total", type=int, default=1000, help="sample count in published class proportions")
    group.add_argument("--counts", help="comma-separated per-class counts, e.g. 10,10,5,2,1")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", parents=[common], help="train on a manifest's stratified 80/20 split")
    t.add_argument("--manifest", required=True)
    t.add_argument("--config", help="TOML training config")
    t.add_argument("--out", required=True, help="best-validation checkpoint path")
    t.add_argument("--history", help="history CSV (default: <out>.history.csv)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="confusion matrix and accuracies")
    e.add_argument("--manifest")
    e.add_argument("--checkpoint")
    e.add_argument("--config", help="TOML config the checkpoint was trained with")
    e.add_argument("--split", choices=("all", "val"), default="all")
    e.add_argument("--kfold", type=int, default=0, help="train and evaluate k stratified folds")
    e.add_argument("--confusion", help="JSON with a precomputed confusion matrix (rows predicted)")
    e.add_argument("--metrics", help="write metrics JSON here")
    e.set_defaults(func=cmd_eval)

    q = sub.add_parser("predict", parents=[common], help="class probabilities per sample as CSV")
    q.add_argument("--manifest", required=True)
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--config")
    q.add_argument("--out")
    q.add_argument("--moving-only", action="store_true", help="skip samples flagged as stopped")
    q.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NonFiniteLoss as exc:
        print(f"error: {exc} (last good checkpoint kept)", file=sys.stderr)
        return EXIT_NUMERIC
    except CheckpointMismatch as exc:
        print(f"error: checkpoint mismatch: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (DetectionParseError, ManifestError, InvalidConfig, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EmptyDataset, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
