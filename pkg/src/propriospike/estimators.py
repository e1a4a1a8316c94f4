"""Scikit-learn style estimators wrapping the pipeline stages.

These follow the fit/transform/predict conventions (constructor args
stored verbatim, learned attributes suffixed with underscores), so they
compose with sklearn tooling like clone() and Pipeline. Transformers at
the front of the pipeline accept Dataset objects; the classifiers accept
either a Dataset with encoded rasters or a plain (n_trials, channels, T)
spike array plus labels.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .baselines import features_rate, knn_predict
from .errors import InvalidInputError
from .network import NetworkParams, decide, forward
from .spindle import EncoderConfig, encode_dataset
from .training import TrainConfig, stack_rasters, train_arrays
from .types import Dataset


def check_dataset(X, *, need_rasters: bool = False) -> Dataset:
    """Validate that X is a Dataset, optionally with encoded rasters."""
    if not isinstance(X, Dataset):
        raise InvalidInputError(
            f"expected a Dataset, got {type(X).__name__}")
    if need_rasters and any(t.raster is None for t in X.trials):
        raise InvalidInputError("dataset trials lack rasters; encode first")
    return X


def check_spike_array(X) -> np.ndarray:
    """Validate a (n_trials, channels, T) binary spike array."""
    X = np.asarray(X)
    if X.ndim != 3:
        raise InvalidInputError(
            f"expected (n_trials, channels, T) spikes, got shape {X.shape}")
    return X


def _spikes_and_labels(X, y):
    if isinstance(X, Dataset):
        return stack_rasters(check_dataset(X, need_rasters=True))
    if y is None:
        raise InvalidInputError("labels are required with array input")
    X = check_spike_array(X)
    y = np.asarray(y)
    if len(X) != len(y):
        raise InvalidInputError(
            f"{len(X)} trials but {len(y)} labels")
    return X, y


class SpindleEncoder(BaseEstimator, TransformerMixin):
    """Transformer from raw-trace datasets to spike-raster datasets.

    fit() learns the sensor calibration bounds (from the dataset's own
    recorded bounds, else from the min/max reading over its traces);
    transform() applies those bounds and runs the afferent encoder.
    """

    def __init__(self, gamma_s_pps: float = 70.0, gamma_d_pps: float = 70.0,
                 rate_cap_hz: float = 250.0, settle_ms: int = 500):
        self.gamma_s_pps = gamma_s_pps
        self.gamma_d_pps = gamma_d_pps
        self.rate_cap_hz = rate_cap_hz
        self.settle_ms = settle_ms

    def _config(self) -> EncoderConfig:
        return EncoderConfig(gamma_s_pps=self.gamma_s_pps,
                             gamma_d_pps=self.gamma_d_pps,
                             rate_cap_hz=self.rate_cap_hz,
                             settle_ms=int(self.settle_ms))

    def fit(self, X, y=None):
        X = check_dataset(X)
        self._config()  # validate parameters eagerly
        if X.reading_min is not None:
            self.bounds_ = (X.reading_min, X.reading_max)
        else:
            lo = min(float(t.trace.samples.min()) for t in X.trials)
            hi = max(float(t.trace.samples.max()) for t in X.trials)
            if not lo < hi:
                raise InvalidInputError("degenerate reading range")
            self.bounds_ = (lo, hi)
        return self

    def transform(self, X) -> Dataset:
        if not hasattr(self, "bounds_"):
            raise InvalidInputError("SpindleEncoder is not fitted")
        X = check_dataset(X)
        calibrated = Dataset(X.trials, X.class_names, *self.bounds_)
        return encode_dataset(calibrated, self._config())


class RateWindowFeatures(BaseEstimator, TransformerMixin):
    """Windowed spike-count features from an encoded dataset."""

    def __init__(self, window_ms: int = 100, stride_ms: int | None = None):
        self.window_ms = window_ms
        self.stride_ms = stride_ms

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        if isinstance(X, Dataset):
            rasters = [t.raster for t in check_dataset(X, need_rasters=True).trials]
            rows = [features_rate(r, self.window_ms, self.stride_ms)
                    for r in rasters]
            return np.stack(rows)
        X = check_spike_array(X)
        from .types import RasterKind, SpikeRaster
        return np.stack([
            features_rate(SpikeRaster(x, RasterKind.NETWORK),
                          self.window_ms, self.stride_ms) for x in X])


class KNNBaselineClassifier(BaseEstimator, ClassifierMixin):
    """Euclidean k-nearest-neighbor vote over precomputed feature rows."""

    def __init__(self, k: int = 5):
        self.k = k

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
            raise InvalidInputError(
                "fit needs a nonempty 2-D feature matrix and matching labels")
        self.train_features_ = X
        self.train_labels_ = y
        self.classes_ = np.unique(y)
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "train_features_"):
            raise InvalidInputError("KNNBaselineClassifier is not fitted")
        return knn_predict(self.train_features_, self.train_labels_,
                           np.asarray(X, dtype=np.float64), self.k)


class HybridSNNClassifier(BaseEstimator, ClassifierMixin):
    """Spiking classifier with surrogate-gradient training.

    arch "hybrid" uses the resonate-and-fire input layer; "cuba" uses
    current-based LIF throughout. Labels must be 0..n_classes-1. After
    fit(): weights_, params_, history_, classes_.
    """

    def __init__(self, arch: str = "hybrid", hidden: tuple = (64, 64),
                 epochs: int = 100, learning_rate: float = 1e-3,
                 batch_size: int = 16, val_fraction: float = 0.1,
                 seed: int = 0, dtype: str = "float32",
                 target_pos_ratio: float = 0.5,
                 target_neg_ratio: float = 0.1,
                 surrogate_width: float = 0.25):
        self.arch = arch
        self.hidden = hidden
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.val_fraction = val_fraction
        self.seed = seed
        self.dtype = dtype
        self.target_pos_ratio = target_pos_ratio
        self.target_neg_ratio = target_neg_ratio
        self.surrogate_width = surrogate_width

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, learning_rate=self.learning_rate,
            batch_size=self.batch_size, val_fraction=self.val_fraction,
            seed=self.seed, dtype=self.dtype,
            target_pos_ratio=self.target_pos_ratio,
            target_neg_ratio=self.target_neg_ratio)

    def fit(self, X, y=None):
        spikes, labels = _spikes_and_labels(X, y)
        n_out = (X.n_classes if isinstance(X, Dataset)
                 else int(labels.max()) + 1)
        params = NetworkParams(
            arch=self.arch, n_in=spikes.shape[1],
            hidden=tuple(self.hidden), n_out=n_out,
            surrogate_width=self.surrogate_width)
        result = train_arrays(spikes, labels, params, self._train_config())
        self.params_ = params
        self.weights_ = result.weights
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.classes_ = np.arange(n_out)
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "weights_"):
            raise InvalidInputError("HybridSNNClassifier is not fitted")
        if isinstance(X, Dataset):
            spikes, _ = stack_rasters(check_dataset(X, need_rasters=True))
        else:
            spikes = check_spike_array(X)
        dtype = np.float32 if self.dtype == "float32" else np.float64
        preds = np.empty(len(spikes), dtype=int)
        for start in range(0, len(spikes), 64):
            sl = slice(start, start + 64)
            out = forward(self.weights_, self.params_, spikes[sl], dtype=dtype)
            preds[sl], _ = decide(out)
        return preds
