"""On-disk formats: trace CSV, spike-event CSV, dataset manifest, JSON configs.

A dataset directory looks like:

    manifest.json
    trials/trial_00000.csv      one row per sample: t_ms,thumb,index,middle,ring
    rasters/trial_00000.csv     one row per spike event: t_ms,channel

Floats are written with repr so save/load round-trips exactly. The trace
sample rate is not stored; it is inferred from the time column on load.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .errors import InvalidInputError
from .types import Dataset, RasterKind, SensorTrace, SpikeRaster, TrialRecord

MANIFEST_NAME = "manifest.json"
_MANIFEST_FORMAT = "grasp-dataset"


def save_json(obj: dict, path: str) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def load_json(path: str) -> dict:
    with open(path) as f:
        return json.load(f)


def save_trace(trace: SensorTrace, path: str) -> None:
    t_ms = trace.times_ms
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t_ms"] + list(trace.channel_names))
        for i in range(trace.n_samples):
            writer.writerow([repr(float(t_ms[i]))] +
                            [repr(float(v)) for v in trace.samples[:, i]])


def load_trace(path: str) -> SensorTrace:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    if not header or header[0] != "t_ms" or len(header) < 2:
        raise InvalidInputError(f"{path}: expected header 't_ms,<channel>,...'")
    if len(rows) < 2:
        raise InvalidInputError(f"{path}: need at least 2 samples")
    data = np.asarray(rows)
    span_ms = data[-1, 0] - data[0, 0]
    if span_ms <= 0:
        raise InvalidInputError(f"{path}: time column must increase")
    rate_hz = round(1000.0 * (len(rows) - 1) / span_ms, 6)
    return SensorTrace(data[:, 1:].T, rate_hz, tuple(header[1:]))


def save_raster(raster: SpikeRaster, path: str) -> None:
    chans, bins = np.nonzero(raster.spikes)
    order = np.lexsort((chans, bins))
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t_ms", "channel"])
        for c, t in zip(chans[order], bins[order]):
            writer.writerow([repr(float(t * raster.DT_MS)), int(c)])


def load_raster(path: str, n_channels: int, n_bins: int,
                kind: RasterKind = RasterKind.AFFERENT) -> SpikeRaster:
    spikes = np.zeros((n_channels, n_bins), dtype=np.uint8)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != ["t_ms", "channel"]:
            raise InvalidInputError(f"{path}: expected header 't_ms,channel'")
        for row in reader:
            if not row:
                continue
            t_bin = int(round(float(row[0]) / SpikeRaster.DT_MS))
            c = int(row[1])
            if not (0 <= t_bin < n_bins and 0 <= c < n_channels):
                raise InvalidInputError(
                    f"{path}: event ({row[0]} ms, ch {row[1]}) outside "
                    f"({n_channels} channels, {n_bins} bins)")
            spikes[c, t_bin] = 1
    return SpikeRaster(spikes, kind)


def save_dataset(dataset: Dataset, out_dir: str) -> None:
    """Write a dataset directory: manifest plus per-trial CSV files."""
    os.makedirs(os.path.join(out_dir, "trials"), exist_ok=True)
    has_rasters = any(t.raster is not None for t in dataset.trials)
    if has_rasters:
        os.makedirs(os.path.join(out_dir, "rasters"), exist_ok=True)
    entries = []
    for i, trial in enumerate(dataset.trials):
        rel_trace = f"trials/trial_{i:05d}.csv"
        save_trace(trial.trace, os.path.join(out_dir, rel_trace))
        entry = {
            "trace": rel_trace,
            "label": trial.label,
            "seed": trial.seed,
            "object": trial.object_name,
        }
        if trial.raster is not None:
            rel_raster = f"rasters/trial_{i:05d}.csv"
            save_raster(trial.raster, os.path.join(out_dir, rel_raster))
            entry["raster"] = rel_raster
            entry["raster_channels"] = trial.raster.n_channels
            entry["raster_bins"] = trial.raster.n_steps
        entries.append(entry)
    manifest = {
        "format": _MANIFEST_FORMAT,
        "version": 1,
        "class_names": list(dataset.class_names),
        "reading_min": dataset.reading_min,
        "reading_max": dataset.reading_max,
        "trials": entries,
    }
    save_json(manifest, os.path.join(out_dir, MANIFEST_NAME))


def load_dataset(in_dir: str) -> Dataset:
    manifest = load_json(os.path.join(in_dir, MANIFEST_NAME))
    if manifest.get("format") != _MANIFEST_FORMAT:
        raise InvalidInputError(f"{in_dir}: not a dataset directory")
    trials = []
    for entry in manifest["trials"]:
        trace = load_trace(os.path.join(in_dir, entry["trace"]))
        raster = None
        if "raster" in entry:
            raster = load_raster(os.path.join(in_dir, entry["raster"]),
                                 entry["raster_channels"], entry["raster_bins"])
        trials.append(TrialRecord(trace, entry["label"], entry["seed"],
                                  entry["object"], raster))
    return Dataset(tuple(trials), tuple(manifest["class_names"]),
                   manifest["reading_min"], manifest["reading_max"])
