"""Metrics, accuracy-over-time curves, and experiment orchestration.

run_experiment() wires the whole pipeline: synthesize trials, split,
encode, train the spiking models with repeated seeds, score the kNN
baselines on the same split, and emit result files into a directory:

    report.csv      model,repeat,seed,test_accuracy (+ mean/std rows)
    confusion.csv   summed confusion matrix of the first spiking model
    curve.csv       accuracy vs decision time per spiking model
    curve.svg       line chart of curve.csv
    history.csv     per-epoch training metrics for every run
    timing.csv      wall-clock timings (excluded from determinism checks)
    checkpoint_<model>_<repeat>.bin

Every result value in report/confusion/curve derives only from seeded
computation, so reruns with the same config are byte-identical; timings
live in separate files.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import dataset_features, knn_predict
from .errors import InvalidInputError
from .grasp import (DEFAULT_DRIFT_STD, DEFAULT_NOISE_STD, default_prototypes,
                    synth_dataset)
from .network import (NetworkParams, NetworkWeights, decide, decide_prefix,
                      forward, save_checkpoint)
from .signal import split_dataset
from .spindle import EncoderConfig, encode_dataset
from .training import TrainConfig, train
from .types import Dataset

_EVAL_CHUNK = 64


def accuracy(preds, labels) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise InvalidInputError(
            f"length mismatch: {preds.shape} vs {labels.shape}")
    if preds.size == 0:
        raise InvalidInputError("empty prediction set")
    return float((preds == labels).mean())


def confusion_matrix(preds, labels, n_classes: int) -> np.ndarray:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise InvalidInputError(
            f"length mismatch: {preds.shape} vs {labels.shape}")
    if preds.size and not (0 <= preds.min() and preds.max() < n_classes
                           and 0 <= labels.min() and labels.max() < n_classes):
        raise InvalidInputError(f"class ids outside [0, {n_classes})")
    mat = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(mat, (labels, preds), 1)
    return mat


def eval_network(weights: NetworkWeights, params: NetworkParams,
                 spikes: np.ndarray, labels: np.ndarray,
                 grid_ms: int = 100, dtype=np.float32):
    """Forward the test set once; score full-window and prefix decisions.

    Returns (accuracy, confusion, (t_ms, curve_accuracy), steps_per_s).
    Prefix decisions are taken from running output-spike counts at every
    grid_ms, so the final curve point is exactly the overall accuracy.
    """
    if grid_ms < 1:
        raise InvalidInputError("grid_ms must be >= 1")
    n = len(labels)
    T = spikes.shape[2]
    edges = np.arange(grid_ms, T + 1, grid_ms)
    if edges[-1] != T:
        edges = np.append(edges, T)
    preds = np.empty(n, dtype=int)
    prefix_hits = np.zeros(len(edges))
    fwd_seconds = 0.0
    for start in range(0, n, _EVAL_CHUNK):
        sl = slice(start, min(start + _EVAL_CHUNK, n))
        t0 = time.perf_counter()
        out = forward(weights, params, spikes[sl], dtype=dtype)
        fwd_seconds += time.perf_counter() - t0
        preds[sl], _ = decide(out)
        prefix_hits += (decide_prefix(out, edges) == labels[sl]).sum(axis=1)
    acc = accuracy(preds, labels)
    conf = confusion_matrix(preds, labels, int(labels.max()) + 1)
    steps_per_s = n * T / fwd_seconds if fwd_seconds > 0 else float("inf")
    return acc, conf, (edges.astype(float), prefix_hits / n), steps_per_s


def accuracy_over_time(weights: NetworkWeights, params: NetworkParams,
                       dataset: Dataset, grid_ms: int = 100,
                       dtype=np.float32):
    """(t_ms, accuracy) curve of prefix decisions on an encoded dataset."""
    from .training import stack_rasters
    spikes, labels = stack_rasters(dataset)
    _, _, curve, _ = eval_network(weights, params, spikes, labels,
                                  grid_ms, dtype)
    return curve


@dataclass(frozen=True)
class ExperimentConfig:
    """Full pipeline settings; nested configs use their own defaults."""

    seed: int = 0
    trials_per_class: int = 100
    noise_std: float = DEFAULT_NOISE_STD
    baseline_drift_std: float = DEFAULT_DRIFT_STD
    train_fraction: float = 0.8
    models: tuple = ("hybrid", "cuba", "knn-raw", "knn-rate")
    repeats: int = 3
    compare_repeats: int = 1
    hidden: tuple = (64, 64)
    knn_k: int = 5
    window_ms: int = 100
    grid_ms: int = 100
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "hidden", tuple(self.hidden))
        known = {"hybrid", "cuba", "knn-raw", "knn-rate"}
        bad = set(self.models) - known
        if bad:
            raise InvalidInputError(f"unknown models {sorted(bad)}; "
                                    f"choose from {sorted(known)}")
        if not self.models:
            raise InvalidInputError("models must not be empty")
        if self.repeats < 1 or self.compare_repeats < 1:
            raise InvalidInputError("repeats must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidInputError("train_fraction must be in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "trials_per_class": self.trials_per_class,
            "noise_std": self.noise_std,
            "baseline_drift_std": self.baseline_drift_std,
            "train_fraction": self.train_fraction,
            "models": list(self.models),
            "repeats": self.repeats,
            "compare_repeats": self.compare_repeats,
            "hidden": list(self.hidden),
            "knn_k": self.knn_k,
            "window_ms": self.window_ms,
            "grid_ms": self.grid_ms,
            "encoder": self.encoder.to_dict(),
            "train": self.train.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "encoder" in d:
            d["encoder"] = EncoderConfig.from_dict(d["encoder"])
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        return cls(**d)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    accuracies: dict          # model -> list of per-repeat accuracies
    curves: dict              # spiking model -> (t_ms, mean accuracy)
    confusions: dict          # (model, repeat) -> matrix
    histories: dict           # (model, repeat) -> history list
    timings: dict             # phase -> seconds (plus steps/s entries)
    out_dir: str | None

    def mean_accuracy(self, model: str) -> float:
        return float(np.mean(self.accuracies[model]))


def _write_report(path: str, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "repeat", "seed", "test_accuracy"])
        for r in rows:
            w.writerow(r)


def _write_confusion(path: str, mat: np.ndarray, class_names):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["true\\pred"] + list(class_names))
        for name, row in zip(class_names, mat):
            w.writerow([name] + [int(v) for v in row])


def _write_curves(path: str, curves: dict):
    models = list(curves)
    t = curves[models[0]][0]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t_ms"] + models)
        for i, ti in enumerate(t):
            w.writerow([repr(float(ti))] +
                       [repr(float(curves[m][1][i])) for m in models])


def _write_history(path: str, histories: dict):
    cols = ["model", "repeat", "epoch", "loss", "train_acc", "val_acc",
            "seconds", "trials_per_s"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for (model, rep), history in sorted(histories.items()):
            for e in history:
                val = e.get("val_acc")
                w.writerow([model, rep, e["epoch"], repr(e["loss"]),
                            repr(e["train_acc"]),
                            "" if val is None else repr(val),
                            repr(e["seconds"]), repr(e["trials_per_s"])])


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def svg_line_chart(path: str, x: np.ndarray, series: dict, title: str,
                   xlabel: str, ylabel: str) -> None:
    """Minimal self-contained SVG polyline chart (y fixed to [0, 1])."""
    width, height = 640, 420
    ml, mr, mt, mb = 60, 20, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    x = np.asarray(x, dtype=float)
    x0, x1 = float(x.min()), float(x.max())
    span = (x1 - x0) or 1.0

    def sx(v):
        return ml + (v - x0) / span * pw

    def sy(v):
        return mt + (1.0 - v) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]
    for frac in np.linspace(0.0, 1.0, 6):
        yy = sy(frac)
        parts.append(f'<line x1="{ml}" y1="{yy:.1f}" x2="{ml + pw}" '
                     f'y2="{yy:.1f}" stroke="#dddddd"/>')
        parts.append(f'<text x="{ml - 8}" y="{yy + 4:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{frac:.1f}</text>')
    for frac in np.linspace(0.0, 1.0, 7):
        xv = x0 + frac * span
        xx = sx(xv)
        parts.append(f'<line x1="{xx:.1f}" y1="{mt + ph}" x2="{xx:.1f}" '
                     f'y2="{mt + ph + 5}" stroke="#333333"/>')
        parts.append(f'<text x="{xx:.1f}" y="{mt + ph + 18}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{xv:.0f}</text>')
    parts.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" '
                 f'fill="none" stroke="#333333"/>')
    parts.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13">{xlabel}</text>')
    parts.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13" '
                 f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{ylabel}</text>')
    for i, (name, ys) in enumerate(series.items()):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        pts = " ".join(f"{sx(xv):.2f},{sy(float(yv)):.2f}"
                       for xv, yv in zip(x, ys))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.8"/>')
        ly = mt + 16 + 16 * i
        parts.append(f'<line x1="{ml + pw - 150}" y1="{ly - 4}" '
                     f'x2="{ml + pw - 120}" y2="{ly - 4}" stroke="{color}" '
                     f'stroke-width="1.8"/>')
        parts.append(f'<text x="{ml + pw - 114}" y="{ly}" '
                     f'font-family="sans-serif" font-size="12">{name}</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None,
                   log=None) -> ExperimentResult:
    """Run the full pipeline per the config; see module docstring."""
    say = log or (lambda msg: None)

    def timed(phase, fn, timings):
        t0 = time.perf_counter()
        out = fn()
        timings[phase] = timings.get(phase, 0.0) + time.perf_counter() - t0
        say(f"{phase}: {time.perf_counter() - t0:.1f}s")
        return out

    timings = {}
    protos = default_prototypes()
    full = timed("generate", lambda: synth_dataset(
        protos, cfg.trials_per_class, cfg.noise_std, cfg.seed,
        baseline_drift_std=cfg.baseline_drift_std), timings)
    train_ds, test_ds = split_dataset(full, cfg.train_fraction, cfg.seed)
    needs_spikes = bool({"hybrid", "cuba", "knn-rate"} & set(cfg.models))
    if needs_spikes:
        enc_train = timed("encode", lambda: encode_dataset(
            train_ds, cfg.encoder), timings)
        enc_test = timed("encode", lambda: encode_dataset(
            test_ds, cfg.encoder), timings)

    accuracies = {}
    curves = {}
    confusions = {}
    histories = {}
    report_rows = []
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    for model in cfg.models:
        if model in ("hybrid", "cuba"):
            from .training import stack_rasters
            test_x, test_y = stack_rasters(enc_test)
            n_rep = cfg.repeats if model == "hybrid" else cfg.compare_repeats
            accs = []
            per_curve = []
            for r in range(n_rep):
                seed = cfg.seed + r
                params = NetworkParams(
                    arch=model, n_in=8, hidden=cfg.hidden,
                    n_out=full.n_classes)
                tcfg = replace(cfg.train, seed=seed)
                result = timed(f"train-{model}", lambda: train(
                    enc_train, params, tcfg, log=None), timings)
                acc, conf, curve, sps = eval_network(
                    result.weights, params, test_x, test_y, cfg.grid_ms,
                    tcfg.np_dtype)
                timings[f"eval-steps-per-s-{model}"] = sps
                accs.append(acc)
                per_curve.append(curve[1])
                confusions[(model, r)] = conf
                histories[(model, r)] = result.history
                report_rows.append([model, r, seed, repr(acc)])
                say(f"{model} repeat {r}: test accuracy {acc:.4f}")
                if out_dir:
                    save_checkpoint(
                        os.path.join(out_dir, f"checkpoint_{model}_{r}.bin"),
                        result.weights, params)
                curve_t = curve[0]
            curves[model] = (curve_t, np.mean(per_curve, axis=0))
            accuracies[model] = accs
        else:
            mode = "raw" if model == "knn-raw" else "rate"
            src_train = train_ds if mode == "raw" else enc_train
            src_test = test_ds if mode == "raw" else enc_test
            def knn_run():
                ftr = dataset_features(src_train, mode,
                                       window_ms=cfg.window_ms)
                fte = dataset_features(src_test, mode,
                                       window_ms=cfg.window_ms)
                return knn_predict(ftr, np.asarray(src_train.labels()),
                                   fte, cfg.knn_k)
            preds = timed(f"knn-{mode}", knn_run, timings)
            labels = np.asarray(src_test.labels())
            acc = accuracy(preds, labels)
            accuracies[model] = [acc]
            confusions[(model, 0)] = confusion_matrix(preds, labels,
                                                      full.n_classes)
            report_rows.append([model, 0, cfg.seed, repr(acc)])
            say(f"{model}: test accuracy {acc:.4f}")

    for model in cfg.models:
        accs = accuracies[model]
        report_rows.append([model, "mean", "", repr(float(np.mean(accs)))])
        report_rows.append([model, "std", "", repr(float(np.std(accs)))])

    result = ExperimentResult(cfg, accuracies, curves, confusions,
                              histories, timings, out_dir)
    if out_dir:
        _write_report(os.path.join(out_dir, "report.csv"), report_rows)
        first_snn = next((m for m in cfg.models if m in ("hybrid", "cuba")),
                         None)
        if first_snn:
            summed = sum(conf for (m, _r), conf in confusions.items()
                         if m == first_snn)
            _write_confusion(os.path.join(out_dir, "confusion.csv"), summed,
                             full.class_names)
        if curves:
            _write_curves(os.path.join(out_dir, "curve.csv"), curves)
            svg_line_chart(
                os.path.join(out_dir, "curve.svg"),
                next(iter(curves.values()))[0],
                {m: c[1] for m, c in curves.items()},
                "Prefix-decision accuracy", "decision time (ms)", "accuracy")
        if histories:
            _write_history(os.path.join(out_dir, "history.csv"), histories)
        with open(os.path.join(out_dir, "timing.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["phase", "value"])
            for phase, val in sorted(timings.items()):
                w.writerow([phase, repr(val)])
        from .io import save_json
        save_json(cfg.to_dict(), os.path.join(out_dir, "experiment_config.json"))
    return result
