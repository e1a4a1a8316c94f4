import numpy as np
import pytest

from propriospike.baselines import (dataset_features, features_rate,
                                    features_raw, knn_predict)
from propriospike.errors import InvalidInputError
from propriospike.types import FascicleTrace, SpikeRaster


def brute_force_knn(train_x, train_y, queries, k):
    """Independent oracle: exhaustive distance sort + the documented
    tie-break chain (vote count, then mean distance, then class index)."""
    preds = []
    for q in queries:
        d = np.sqrt(((train_x - q) ** 2).sum(axis=1))
        order = np.argsort(d, kind="stable")[:k]
        votes = train_y[order]
        best = None
        for c in sorted(set(votes.tolist())):
            n_votes = int((votes == c).sum())
            mean_d = d[order][votes == c].mean()
            key = (-n_votes, mean_d, c)
            if best is None or key < best[0]:
                best = (key, c)
        preds.append(best[1])
    return np.array(preds)


class TestKnnPredict:
    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_matches_brute_force_oracle(self, k, rng):
        train_x = rng.normal(size=(50, 5))
        train_y = rng.integers(0, 4, size=50)
        queries = rng.normal(size=(30, 5))
        got = knn_predict(train_x, train_y, queries, k)
        want = brute_force_knn(train_x, train_y, queries, k)
        np.testing.assert_array_equal(got, want)

    def test_k1_returns_nearest_label(self):
        train_x = np.array([[0.0], [1.0], [2.0]])
        train_y = np.array([7, 8, 9])
        preds = knn_predict(train_x, train_y, np.array([[1.2], [-5.0]]), k=1)
        np.testing.assert_array_equal(preds, [8, 7])

    def test_vote_tie_breaks_by_mean_distance(self):
        # two votes each; class 1's members are closer on average
        train_x = np.array([[0.0], [0.4], [3.0], [3.2]])
        train_y = np.array([1, 1, 0, 0])
        preds = knn_predict(train_x, train_y, np.array([[1.0]]), k=4)
        assert preds[0] == 1

    def test_exact_tie_breaks_by_class_index(self):
        train_x = np.array([[-1.0], [1.0]])
        train_y = np.array([3, 2])
        preds = knn_predict(train_x, train_y, np.array([[0.0]]), k=2)
        assert preds[0] == 2

    def test_self_queries_are_perfect_at_k1(self, rng):
        x = rng.normal(size=(40, 4))
        y = rng.integers(0, 5, size=40)
        np.testing.assert_array_equal(knn_predict(x, y, x, k=1), y)

    def test_validation(self, rng):
        x = rng.normal(size=(10, 3))
        y = np.zeros(10, dtype=int)
        with pytest.raises(InvalidInputError):
            knn_predict(x, y, x, k=0)
        with pytest.raises(InvalidInputError):
            knn_predict(x, y, x, k=11)
        with pytest.raises(InvalidInputError):
            knn_predict(x, y, rng.normal(size=(2, 4)), k=1)
        with pytest.raises(InvalidInputError):
            knn_predict(x[:0], y[:0], x, k=1)


class TestFeaturesRaw:
    def test_decimation_layout(self):
        lengths = np.arange(40, dtype=float).reshape(4, 10)
        f = FascicleTrace(lengths / 100.0 + 0.95, np.zeros((4, 10)))
        row = features_raw(f, decim=5)
        # channel-major: samples 0 and 5 of each channel in order
        want = (lengths[:, ::5].reshape(-1) / 100.0) + 0.95
        np.testing.assert_allclose(row, want)

    def test_full_length_dim(self):
        f = FascicleTrace(np.full((4, 6000), 1.0), np.zeros((4, 6000)))
        assert features_raw(f, decim=10).shape == (4 * 600,)

    def test_rejects_bad_decim(self):
        f = FascicleTrace(np.full((4, 10), 1.0), np.zeros((4, 10)))
        with pytest.raises(InvalidInputError):
            features_raw(f, decim=0)


class TestFeaturesRate:
    def test_counts_in_windows(self):
        spikes = np.zeros((2, 300), dtype=np.uint8)
        spikes[0, 10] = spikes[0, 120] = spikes[0, 130] = 1
        spikes[1, 250] = 1
        r = SpikeRaster(spikes, kind="afferent" if False else "network")
        row = features_rate(r, window_ms=100)
        np.testing.assert_array_equal(row, [1, 2, 0, 0, 0, 1])

    def test_full_length_dim(self):
        r = SpikeRaster(np.zeros((8, 6000), dtype=np.uint8), kind="afferent")
        assert features_rate(r, window_ms=100).shape == (8 * 60,)

    def test_stride_overlap(self):
        spikes = np.zeros((1, 10), dtype=np.uint8)
        spikes[0, [0, 4, 9]] = 1
        r = SpikeRaster(spikes, kind="network")
        row = features_rate(r, window_ms=5, stride_ms=2)
        # windows [0,5) [2,7) [4,9) -> counts 2, 1, 1
        np.testing.assert_array_equal(row, [2, 1, 1])

    def test_partial_windows_dropped(self):
        r = SpikeRaster(np.ones((1, 250), dtype=np.uint8), kind="network")
        assert features_rate(r, window_ms=100).shape == (2,)

    def test_window_longer_than_raster_rejected(self):
        r = SpikeRaster(np.zeros((1, 50), dtype=np.uint8), kind="network")
        with pytest.raises(InvalidInputError):
            features_rate(r, window_ms=100)


class TestDatasetFeatures:
    def test_raw_shape(self, tiny_dataset):
        feats = dataset_features(tiny_dataset, "raw")
        n_samples = tiny_dataset.trials[0].trace.n_samples
        n_bins = round(tiny_dataset.trials[0].trace.duration_s * 1000)
        assert feats.shape == (18, 4 * len(range(0, n_bins, 10)))
        assert np.isfinite(feats).all()

    def test_rate_shape(self, tiny_encoded):
        feats = dataset_features(tiny_encoded, "rate")
        n_windows = tiny_encoded.trials[0].raster.n_steps // 100
        assert feats.shape == (18, 8 * n_windows)

    def test_rate_requires_rasters(self, tiny_dataset):
        with pytest.raises(InvalidInputError):
            dataset_features(tiny_dataset, "rate")

    def test_raw_requires_bounds(self, tiny_dataset):
        from propriospike.types import Dataset
        bare = Dataset(tiny_dataset.trials, tiny_dataset.class_names)
        with pytest.raises(InvalidInputError):
            dataset_features(bare, "raw")

    def test_unknown_mode(self, tiny_dataset):
        with pytest.raises(InvalidInputError):
            dataset_features(tiny_dataset, "psd")

    def test_rate_knn_beats_chance_on_tiny_data(self, tiny_encoded):
        feats = dataset_features(tiny_encoded, "rate")
        labels = tiny_encoded.labels
        preds = knn_predict(feats, labels, feats, k=3)
        assert (preds == labels).mean() > 0.5
