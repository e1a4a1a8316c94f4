"""Command-line interface.

Subcommands mirror the pipeline stages:

    generate    synthesize a labeled dataset of grasp trials
    encode      attach afferent spike rasters to a dataset
    train       fit a spiking classifier on an encoded dataset
    eval        score a checkpoint on an encoded dataset
    baseline    run a kNN baseline with an internal train/test split
    curve       accuracy-over-time curve for a checkpoint
    experiment  full pipeline with repeats and report files

Every subcommand takes --seed, --config (JSON overriding defaults), and
--out. CLI flags win over config-file values.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from .baselines import dataset_features, knn_predict
from .errors import InvalidInputError
from .evaluate import (ExperimentConfig, accuracy, confusion_matrix,
                       eval_network, run_experiment, svg_line_chart)
from .grasp import (DEFAULT_DRIFT_STD, DEFAULT_NOISE_STD, ExplorationSchedule,
                    ObjectPrototype, default_prototypes, synth_dataset)
from .io import load_dataset, load_json, save_dataset, save_json
from .network import NetworkParams, load_checkpoint, save_checkpoint
from .signal import split_dataset
from .spindle import EncoderConfig, encode_dataset
from .training import TrainConfig, stack_rasters, train


def _load_config(path: str | None) -> dict:
    return load_json(path) if path else {}


def _merge(config: dict, key: str, cli_value):
    """CLI flag (if given) beats config file beats caller default."""
    return cli_value if cli_value is not None else config.get(key)


def _add_common(p: argparse.ArgumentParser, out_required: bool = True):
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", required=out_required, help="output directory")


def cmd_generate(args) -> int:
    cfg = _load_config(args.config)
    seed = _merge(cfg, "seed", args.seed) or 0
    per_class = _merge(cfg, "trials_per_class", args.per_class) or 100
    noise = _merge(cfg, "noise_std", args.noise)
    noise = DEFAULT_NOISE_STD if noise is None else noise
    drift = _merge(cfg, "baseline_drift_std", args.drift)
    drift = DEFAULT_DRIFT_STD if drift is None else drift
    if args.protos:
        protos = [ObjectPrototype.from_dict(d) for d in load_json(args.protos)]
    elif "prototypes" in cfg:
        protos = [ObjectPrototype.from_dict(d) for d in cfg["prototypes"]]
    else:
        protos = default_prototypes()
    sched = (ExplorationSchedule.from_dict(cfg["schedule"])
             if "schedule" in cfg else ExplorationSchedule())
    ds = synth_dataset(protos, per_class, noise, seed,
                       baseline_drift_std=drift, sched=sched)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} trials ({ds.n_classes} classes) to {args.out}")
    return 0


def cmd_encode(args) -> int:
    cfg = _load_config(args.config)
    enc = EncoderConfig.from_dict(cfg) if cfg else EncoderConfig()
    ds = load_dataset(args.data)
    encoded = encode_dataset(ds, enc)
    save_dataset(encoded, args.out)
    n_spikes = sum(int(t.raster.spikes.sum()) for t in encoded.trials)
    print(f"encoded {len(encoded)} trials "
          f"({n_spikes / max(len(encoded), 1):.0f} spikes/trial) to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    tdict = dict(cfg.get("train", {}))
    if args.seed is not None:
        tdict["seed"] = args.seed
    if args.epochs is not None:
        tdict["epochs"] = args.epochs
    tcfg = TrainConfig.from_dict(tdict)
    ds = load_dataset(args.data)
    ndict = dict(cfg.get("network", {}))
    ndict.setdefault("arch", args.arch or "hybrid")
    if args.arch:
        ndict["arch"] = args.arch
    ndict.setdefault("n_out", ds.n_classes)
    params = NetworkParams.from_dict(ndict)
    os.makedirs(args.out, exist_ok=True)
    result = train(ds, params, tcfg,
                   log=lambda e: print(
                       f"epoch {e['epoch']:3d}  loss {e['loss']:.5f}  "
                       f"train {e['train_acc']:.3f}  "
                       f"val {e.get('val_acc', float('nan')):.3f}"))
    ckpt = os.path.join(args.out, "checkpoint.bin")
    save_checkpoint(ckpt, result.weights, params)
    with open(os.path.join(args.out, "history.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "train_acc", "val_acc"])
        for e in result.history:
            val = e.get("val_acc")
            w.writerow([e["epoch"], repr(e["loss"]), repr(e["train_acc"]),
                        "" if val is None else repr(val)])
    print(f"best epoch {result.best_epoch}; checkpoint at {ckpt}")
    return 0


def _eval_common(args, grid_ms: int):
    weights, params = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    spikes, labels = stack_rasters(ds)
    return ds, eval_network(weights, params, spikes, labels, grid_ms)


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    grid = _merge(cfg, "grid_ms", args.grid_ms) or 100
    ds, (acc, conf, curve, sps) = _eval_common(args, grid)
    os.makedirs(args.out, exist_ok=True)
    from .evaluate import _write_confusion, _write_curves
    _write_confusion(os.path.join(args.out, "confusion.csv"), conf,
                     ds.class_names)
    _write_curves(os.path.join(args.out, "curve.csv"), {"model": curve})
    print(f"accuracy {acc:.4f} over {len(ds)} trials "
          f"({sps:.0f} simulation steps/s)")
    return 0


def cmd_curve(args) -> int:
    cfg = _load_config(args.config)
    grid = _merge(cfg, "grid_ms", args.grid_ms) or 100
    _ds, (acc, _conf, curve, _sps) = _eval_common(args, grid)
    os.makedirs(args.out, exist_ok=True)
    from .evaluate import _write_curves
    _write_curves(os.path.join(args.out, "curve.csv"), {"model": curve})
    svg_line_chart(os.path.join(args.out, "curve.svg"), curve[0],
                   {"model": curve[1]}, "Prefix-decision accuracy",
                   "decision time (ms)", "accuracy")
    print(f"final accuracy {acc:.4f}; curve written to {args.out}")
    return 0


def cmd_baseline(args) -> int:
    cfg = _load_config(args.config)
    seed = _merge(cfg, "seed", args.seed) or 0
    k = _merge(cfg, "k", args.k) or 5
    window = _merge(cfg, "window_ms", args.window_ms) or 100
    frac = _merge(cfg, "train_fraction", args.train_fraction) or 0.8
    mode = "raw" if args.mode == "raw" else "rate"
    ds = load_dataset(args.data)
    train_ds, test_ds = split_dataset(ds, frac, seed)
    ftr = dataset_features(train_ds, mode, window_ms=window)
    fte = dataset_features(test_ds, mode, window_ms=window)
    preds = knn_predict(ftr, np.asarray(train_ds.labels()), fte, k)
    labels = np.asarray(test_ds.labels())
    acc = accuracy(preds, labels)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "predictions.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["trial", "true", "pred"])
        for i, (t, p) in enumerate(zip(labels, preds)):
            w.writerow([i, int(t), int(p)])
    conf = confusion_matrix(preds, labels, ds.n_classes)
    from .evaluate import _write_confusion
    _write_confusion(os.path.join(args.out, "confusion.csv"), conf,
                     ds.class_names)
    print(f"kNN-{args.mode} (k={k}) accuracy {acc:.4f} "
          f"on {len(labels)} held-out trials")
    return 0


def cmd_experiment(args) -> int:
    cfg_dict = _load_config(args.config)
    cfg = ExperimentConfig.from_dict(cfg_dict) if cfg_dict else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    result = run_experiment(cfg, args.out, log=print)
    for model in cfg.models:
        accs = result.accuracies[model]
        print(f"{model}: mean accuracy {np.mean(accs):.4f} "
              f"(std {np.std(accs):.4f}, n={len(accs)})")
    print(f"reports written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="propriospike",
        description="Spiking-network classification of proprioceptive "
                    "grasp trials.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize grasp trials")
    _add_common(p)
    p.add_argument("--per-class", type=int, default=None)
    p.add_argument("--noise", type=float, default=None,
                   help="additive reading noise std")
    p.add_argument("--drift", type=float, default=None,
                   help="per-trial baseline offset std")
    p.add_argument("--protos", default=None,
                   help="JSON file with a list of object prototypes")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("encode", help="attach spike rasters")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("train", help="train a spiking classifier")
    _add_common(p)
    p.add_argument("--data", required=True, help="encoded dataset directory")
    p.add_argument("--arch", choices=["hybrid", "cuba"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint")
    _add_common(p)
    p.add_argument("--data", required=True, help="encoded dataset directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--grid-ms", type=int, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("baseline", help="kNN baseline")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory "
                   "(encoded for --mode spike)")
    p.add_argument("--mode", choices=["raw", "spike"], required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--window-ms", type=int, default=None)
    p.add_argument("--train-fraction", type=float, default=None)
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("curve", help="accuracy-over-time curve")
    _add_common(p)
    p.add_argument("--data", required=True, help="encoded dataset directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--grid-ms", type=int, default=None)
    p.set_defaults(fn=cmd_curve)

    p = sub.add_parser("experiment", help="full pipeline with reports")
    _add_common(p)
    p.set_defaults(fn=cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
