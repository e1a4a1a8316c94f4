"""Signal plumbing: resampling, normalization, differentiation, splitting."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .types import Dataset, FascicleTrace, SensorTrace

# Sensor readings map affinely onto this normalized fascicle-length band.
L_LOW = 0.95
L_HIGH = 1.08

SMOOTH_WINDOW = 5  # samples of moving-average smoothing after differencing


def resample_linear(trace: SensorTrace, target_hz: float) -> SensorTrace:
    """Resample a trace to target_hz by linear interpolation.

    Output samples sit at j/target_hz for j = 0..n-1 with
    n = floor(span * target_hz) + 1, where span is the time between the
    first and last input samples. First and last values are preserved
    whenever the span is a whole number of output periods.
    """
    if not target_hz > 0:
        raise InvalidInputError(f"target_hz must be positive, got {target_hz}")
    span = trace.duration_s
    # Guard the floor against float fuzz when span * target_hz is integral.
    n_out = int(np.floor(span * target_hz * (1.0 + 1e-12))) + 1
    t_in = np.arange(trace.n_samples) / trace.sample_rate_hz
    t_out = np.arange(n_out) / target_hz
    out = np.empty((4, n_out), dtype=np.float64)
    for c in range(4):
        out[c] = np.interp(t_out, t_in, trace.samples[c])
    return SensorTrace(out, target_hz, trace.channel_names)


def differentiate(series: np.ndarray, sample_rate_hz: float) -> np.ndarray:
    """Central-difference derivative with 5-sample moving-average smoothing.

    Boundaries use one-sided differences; smoothing pads by edge
    replication so a linear ramp stays exact end to end.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1 or series.size < 2:
        raise InvalidInputError("series must be 1-dimensional with at least 2 samples")
    if not sample_rate_hz > 0:
        raise InvalidInputError(f"sample_rate_hz must be positive, got {sample_rate_hz}")
    deriv = np.gradient(series) * sample_rate_hz
    half = SMOOTH_WINDOW // 2
    padded = np.pad(deriv, half, mode="edge")
    kernel = np.full(SMOOTH_WINDOW, 1.0 / SMOOTH_WINDOW)
    return np.convolve(padded, kernel, mode="valid")


def normalize_to_fascicle(trace: SensorTrace, reading_min: float,
                          reading_max: float) -> FascicleTrace:
    """Map raw readings onto normalized fascicle length and differentiate.

    reading_min maps to 0.95 L_o and reading_max to 1.08 L_o; readings are
    clamped to the calibration bounds first. The trace must already be at
    1 kHz (resample first).
    """
    if not reading_min < reading_max:
        raise InvalidInputError(
            f"reading_min must be < reading_max, got [{reading_min}, {reading_max}]")
    if trace.sample_rate_hz != FascicleTrace.SAMPLE_RATE_HZ:
        raise InvalidInputError(
            f"normalize_to_fascicle expects a 1 kHz trace, got {trace.sample_rate_hz} Hz")
    clamped = np.clip(trace.samples, reading_min, reading_max)
    scale = (L_HIGH - L_LOW) / (reading_max - reading_min)
    lengths = L_LOW + (clamped - reading_min) * scale
    velocities = np.empty_like(lengths)
    for c in range(4):
        velocities[c] = differentiate(lengths[c], trace.sample_rate_hz)
    return FascicleTrace(lengths, velocities)


def crop_trace(trace: SensorTrace, n_samples: int) -> SensorTrace:
    """Keep the first n_samples columns of a trace."""
    if not 2 <= n_samples <= trace.n_samples:
        raise InvalidInputError(
            f"cannot crop {trace.n_samples}-sample trace to {n_samples}")
    if n_samples == trace.n_samples:
        return trace
    return SensorTrace(trace.samples[:, :n_samples], trace.sample_rate_hz,
                       trace.channel_names)


def to_fascicle_1khz(trace: SensorTrace, reading_min: float, reading_max: float,
                     n_bins: int | None = None) -> FascicleTrace:
    """Resample to 1 kHz, optionally crop to n_bins samples, and normalize.

    A trace spanning exactly W ms resamples to W+1 instants; cropping to
    n_bins = W keeps one sample per 1 ms bin of the half-open span [0, W).
    """
    at_1k = trace if trace.sample_rate_hz == FascicleTrace.SAMPLE_RATE_HZ \
        else resample_linear(trace, FascicleTrace.SAMPLE_RATE_HZ)
    if n_bins is not None:
        at_1k = crop_trace(at_1k, n_bins)
    return normalize_to_fascicle(at_1k, reading_min, reading_max)


def stratified_split_indices(labels: np.ndarray, first_fraction: float,
                             seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class random partition of indices into two sorted groups.

    Each class contributes round(first_fraction * class_count) members to
    the first group (round-half-even). One generator drives the per-class
    shuffles in ascending class order, so the same seed always yields the
    same partition.
    """
    if not 0.0 < first_fraction < 1.0:
        raise InvalidInputError(
            f"first_fraction must be in (0, 1), got {first_fraction}")
    labels = np.asarray(labels)
    if labels.size == 0:
        raise InvalidInputError("cannot split an empty label set")
    rng = np.random.default_rng(seed)
    first: list[int] = []
    second: list[int] = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        perm = rng.permutation(members)
        n_first = round(first_fraction * len(members))
        first.extend(perm[:n_first].tolist())
        second.extend(perm[n_first:].tolist())
    return np.sort(first), np.sort(second)


def split_dataset(dataset: Dataset, train_fraction: float,
                  seed: int) -> tuple[Dataset, Dataset]:
    """Stratified train/test split of a dataset.

    Classes with fewer than 2 trials are rejected; both subsets keep the
    parent's class names and calibration bounds.
    """
    counts = dataset.class_counts()
    if len(dataset) == 0:
        raise InvalidInputError("cannot split an empty dataset")
    if counts.min() < 2:
        lonely = int(np.argmin(counts))
        raise InvalidInputError(
            f"class {lonely} ({dataset.class_names[lonely]}) has fewer than 2 trials")
    train_idx, test_idx = stratified_split_indices(
        dataset.labels(), train_fraction, seed)

    def subset(idx) -> Dataset:
        return Dataset(tuple(dataset.trials[i] for i in idx), dataset.class_names,
                       dataset.reading_min, dataset.reading_max)

    return subset(train_idx), subset(test_idx)
