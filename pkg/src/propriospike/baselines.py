"""kNN reference classifiers on raw traces and rate-coded spike trains.

Two feature recipes: "raw" decimates the normalized fascicle-length
channels along time; "rate" counts spikes per channel in consecutive
100 ms windows. Classification is a majority vote among the k nearest
training rows by Euclidean distance, with deterministic tie handling.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .signal import to_fascicle_1khz
from .types import Dataset, FascicleTrace, SpikeRaster

DEFAULT_K = 5
DEFAULT_WINDOW_MS = 100


def features_raw(fascicle: FascicleTrace, decim: int = 10) -> np.ndarray:
    """Every decim-th length sample, channels concatenated in order."""
    if decim < 1:
        raise InvalidInputError(f"decim must be >= 1, got {decim}")
    return fascicle.lengths[:, ::decim].reshape(-1).copy()


def features_rate(raster: SpikeRaster, window_ms: int = DEFAULT_WINDOW_MS,
                  stride_ms: int | None = None) -> np.ndarray:
    """Spike counts in sliding windows, concatenated channel-major.

    Windows start at multiples of stride_ms (default: stride = window,
    i.e. non-overlapping) and only full windows are kept.
    """
    stride_ms = window_ms if stride_ms is None else stride_ms
    if window_ms < 1 or stride_ms < 1:
        raise InvalidInputError("window_ms and stride_ms must be >= 1")
    w = int(round(window_ms / raster.DT_MS))
    stride = int(round(stride_ms / raster.DT_MS))
    if w > raster.n_steps:
        raise InvalidInputError(
            f"window of {w} bins exceeds raster length {raster.n_steps}")
    starts = np.arange(0, raster.n_steps - w + 1, stride)
    cum = np.concatenate(
        [np.zeros((raster.n_channels, 1)), np.cumsum(raster.spikes, axis=1)],
        axis=1)
    counts = cum[:, starts + w] - cum[:, starts]
    return counts.reshape(-1)


def knn_predict(train_features: np.ndarray, train_labels: np.ndarray,
                queries: np.ndarray, k: int = DEFAULT_K) -> np.ndarray:
    """Majority vote over the k Euclidean-nearest training rows.

    Vote ties break by smallest mean distance among the tied classes'
    members inside the neighbor set, then by lowest class index.
    Neighbor-rank ties break by training-row order (stable sort).
    """
    train_features = np.asarray(train_features, dtype=np.float64)
    train_labels = np.asarray(train_labels)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    n = len(train_features)
    if n == 0:
        raise InvalidInputError("empty training set")
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must be in [1, {n}], got {k}")
    if queries.shape[1] != train_features.shape[1]:
        raise InvalidInputError(
            f"query dim {queries.shape[1]} != training dim "
            f"{train_features.shape[1]}")
    sq_train = np.sum(train_features**2, axis=1)
    preds = np.empty(len(queries), dtype=int)
    for qi, q in enumerate(queries):
        d2 = sq_train - 2.0 * (train_features @ q) + q @ q
        near = np.argsort(d2, kind="stable")[:k]
        votes = train_labels[near]
        classes, counts = np.unique(votes, return_counts=True)
        tied = classes[counts == counts.max()]
        if len(tied) == 1:
            preds[qi] = tied[0]
            continue
        dists = np.sqrt(np.maximum(d2[near], 0.0))
        mean_d = np.array([dists[votes == c].mean() for c in tied])
        preds[qi] = int(tied[mean_d.argsort(kind="stable")[0]])
    return preds


def dataset_features(dataset: Dataset, mode: str, *, decim: int = 10,
                     window_ms: int = DEFAULT_WINDOW_MS,
                     stride_ms: int | None = None) -> np.ndarray:
    """Feature matrix (one row per trial) for mode 'raw' or 'rate'.

    Raw features come from the same resampled/normalized fascicle traces
    the encoder sees (requires calibration bounds on the dataset); rate
    features require encoded rasters.
    """
    if mode == "raw":
        if dataset.reading_min is None:
            raise InvalidInputError("raw features need calibration bounds")
        n_bins = [round(t.trace.duration_s * 1000.0) for t in dataset.trials]
        rows = [features_raw(
            to_fascicle_1khz(t.trace, dataset.reading_min,
                             dataset.reading_max, n_bins=nb), decim)
            for t, nb in zip(dataset.trials, n_bins)]
    elif mode == "rate":
        rows = []
        for t in dataset.trials:
            if t.raster is None:
                raise InvalidInputError(
                    "rate features need encoded rasters; encode first")
            rows.append(features_rate(t.raster, window_ms, stride_ms))
    else:
        raise InvalidInputError(f"mode must be 'raw' or 'rate', got {mode!r}")
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise InvalidInputError(f"trials produced unequal feature lengths: "
                                f"{sorted(lengths)}")
    return np.stack(rows)
