import numpy as np
import pytest

from propriospike.errors import InvalidInputError
from propriospike.spindle import (DT_S, OCCLUSION_WEIGHT, AfferentRates,
                                  EncoderConfig, FiberKind, FiberParams,
                                  FiberState, SpindleState, encode_trial,
                                  fiber_potential, fiber_step, occlusion,
                                  poisson_spikes, spindle_step, steady_rates,
                                  steady_state, steady_state_tension)
from propriospike.types import FascicleTrace


def held_trace(L, n=400):
    lengths = np.full((4, n), L)
    return FascicleTrace(lengths, np.zeros_like(lengths))


class TestOcclusion:
    def test_identity_value(self):
        assert occlusion(10.0, 50.0) == 51.56

    def test_symmetric(self):
        assert occlusion(3.0, 7.0) == occlusion(7.0, 3.0)

    def test_range_property(self, rng):
        for a, b in rng.uniform(0.0, 200.0, (1000, 2)):
            out = occlusion(a, b)
            assert max(a, b) <= out <= 1.156 * max(a, b) + 1e-12

    def test_rejects_negative(self):
        with pytest.raises(InvalidInputError):
            occlusion(-1.0, 2.0)


class TestFiberStep:
    def test_converges_to_steady_state(self):
        cfg = EncoderConfig()
        p = cfg.bag2
        g = cfg.gamma_s
        state = FiberState()
        for _ in range(3000):
            state = fiber_step(state, p, 1.0, 0.0, g)
        expect = steady_state_tension(p, 1.0, g)
        assert state.tension == pytest.approx(expect, rel=1e-6)
        assert state.tension_rate == pytest.approx(0.0, abs=1e-6)

    def test_steady_state_is_fixed_point(self):
        cfg = EncoderConfig()
        p = cfg.bag1
        g = cfg.gamma_d
        state = FiberState(steady_state_tension(p, 1.02, g), 0.0)
        after = fiber_step(state, p, 1.02, 0.0, g)
        assert after.tension == pytest.approx(state.tension, rel=1e-9)

    def test_tension_never_negative(self):
        p = FiberParams()
        state = FiberState()
        for _ in range(500):
            state = fiber_step(state, p, 0.9, -0.5, 0.0)
            assert state.tension >= 0.0

    def test_rejects_wrong_dt_and_nonfinite(self):
        p = FiberParams()
        with pytest.raises(InvalidInputError):
            fiber_step(FiberState(), p, 1.0, 0.0, 0.7, dt=2e-3)
        with pytest.raises(InvalidInputError):
            fiber_step(FiberState(), p, np.nan, 0.0, 0.7)

    def test_potential_rectified(self):
        p = FiberParams(gain=1000.0, rate_offset=0.01)
        assert fiber_potential(FiberState(0.0, 0.0), p) == 0.0
        # stretch = tension / k_sr; potential = gain * (stretch - offset)
        pot = fiber_potential(FiberState(p.k_sr * 0.02, 0.0), p)
        assert pot == pytest.approx(1000.0 * 0.01)


class TestSteadyRates:
    def test_baseline_band(self):
        """Held at optimal length under 70 pps drive: 30-90 spikes/s."""
        rates = steady_rates(EncoderConfig(), 1.0)
        assert 30.0 <= rates.ia <= 90.0
        assert 30.0 <= rates.ii <= 90.0

    def test_ii_strictly_increasing_with_length(self):
        cfg = EncoderConfig()
        vals = [steady_rates(cfg, L).ii for L in (0.95, 1.00, 1.08)]
        assert vals[0] < vals[1] < vals[2]

    def test_matches_long_integration(self):
        cfg = EncoderConfig()
        state = SpindleState()
        rates = AfferentRates(0.0, 0.0)
        for _ in range(4000):
            state, rates = spindle_step(state, cfg, 1.0, 0.0)
        analytic = steady_rates(cfg, 1.0)
        assert rates.ia == pytest.approx(analytic.ia, rel=1e-4)
        assert rates.ii == pytest.approx(analytic.ii, rel=1e-4)

    def test_rate_cap_applies(self):
        cfg = EncoderConfig()
        rates = steady_rates(cfg, 1.08)
        assert rates.ia <= cfg.rate_cap_hz
        assert rates.ii <= cfg.rate_cap_hz


class TestRampResponse:
    def test_ia_dynamic_overshoot(self):
        """Ia peaks during stretch at >= 1.3x its hold plateau."""
        cfg = EncoderConfig()
        hold0, ramp, hold1 = 300, 200, 700
        L = np.concatenate([np.full(hold0, 1.0),
                            np.linspace(1.0, 1.06, ramp),
                            np.full(hold1, 1.06)])
        Ldot = np.concatenate([np.zeros(hold0),
                               np.full(ramp, 0.06 / (ramp * DT_S)),
                               np.zeros(hold1)])
        state = SpindleState(*(
            FiberState(steady_state_tension(cfg.params(k), 1.0, cfg.drive(k)),
                       0.0)
            for k in (FiberKind.BAG1, FiberKind.BAG2, FiberKind.CHAIN)))
        ia = np.empty(len(L))
        for t in range(len(L)):
            state, rates = spindle_step(state, cfg, L[t], Ldot[t])
            ia[t] = rates.ia
        peak = ia[hold0:hold0 + ramp + 50].max()
        plateau = ia[-200:].mean()
        assert peak >= 1.3 * plateau
        # and the plateau is above the pre-ramp baseline (length coding)
        assert plateau > ia[hold0 - 50:hold0].mean()


class TestPoisson:
    def test_zero_rate_no_spikes(self, rng):
        out = poisson_spikes(np.zeros(1000), DT_S, rng)
        assert out.sum() == 0

    def test_mean_matches_rate(self):
        total = 0
        n_seeds = 50
        for seed in range(n_seeds):
            out = poisson_spikes(np.full(5000, 100.0), DT_S,
                                 np.random.default_rng(seed))
            total += int(out.sum())
        mean = total / n_seeds
        assert mean == pytest.approx(500.0, rel=0.05)

    def test_rejects_rate_dt_above_one(self, rng):
        with pytest.raises(InvalidInputError):
            poisson_spikes(np.full(10, 1500.0), DT_S, rng)

    def test_rejects_negative_or_nan(self, rng):
        with pytest.raises(InvalidInputError):
            poisson_spikes(np.array([-1.0]), DT_S, rng)
        with pytest.raises(InvalidInputError):
            poisson_spikes(np.array([np.nan]), DT_S, rng)

    def test_output_is_binary_uint8(self, rng):
        out = poisson_spikes(np.full((3, 100), 200.0), DT_S, rng)
        assert out.dtype == np.uint8
        assert set(np.unique(out)) <= {0, 1}


class TestEncodeTrial:
    def test_shape_and_determinism(self):
        cfg = EncoderConfig()
        f = held_trace(1.02, 300)
        a = encode_trial(f, cfg, 5)
        b = encode_trial(f, cfg, 5)
        assert a.spikes.shape == (8, 300)
        np.testing.assert_array_equal(a.spikes, b.spikes)
        c = encode_trial(f, cfg, 6)
        assert not np.array_equal(a.spikes, c.spikes)

    def test_settling_removes_onset_transient(self):
        """A held-length trace yields near-stationary firing from bin 0."""
        cfg = EncoderConfig()
        f = held_trace(1.03, 2000)
        raster = encode_trial(f, cfg, 3)
        ia = raster.spikes[0::2].sum(axis=0)  # 4 Ia channels pooled
        first = ia[:500].mean()
        last = ia[-500:].mean()
        assert first == pytest.approx(last, abs=0.05)

    def test_settle_idempotent_at_steady_state(self):
        """Doubling the settle period leaves the rates unchanged."""
        from propriospike.spindle import _rate_series_batch
        cfg = EncoderConfig()
        f = held_trace(1.02, 200)
        ia1, ii1 = _rate_series_batch(f.lengths[None], f.velocities[None],
                                      cfg, cfg.settle_ms)
        ia2, ii2 = _rate_series_batch(f.lengths[None], f.velocities[None],
                                      cfg, 2 * cfg.settle_ms)
        np.testing.assert_allclose(ia1, ia2, atol=1e-6)
        np.testing.assert_allclose(ii1, ii2, atol=1e-6)


class TestEncodeDataset:
    def test_batch_equals_single(self, tiny_dataset, tiny_encoded):
        """Chunked dataset encoding matches per-trial encoding."""
        from propriospike.signal import to_fascicle_1khz
        cfg = EncoderConfig()
        for i in (0, 7, 17):
            tr = tiny_dataset.trials[i]
            f = to_fascicle_1khz(tr.trace, tiny_dataset.reading_min,
                                 tiny_dataset.reading_max,
                                 n_bins=int(round(tr.trace.duration_s * 1000)))
            solo = encode_trial(f, cfg, tr.seed)
            np.testing.assert_array_equal(
                solo.spikes, tiny_encoded.trials[i].raster.spikes)

    def test_raster_length_is_trace_span(self, tiny_encoded):
        for tr in tiny_encoded.trials[:3]:
            assert tr.raster.n_steps == round(tr.trace.duration_s * 1000)

    def test_channel_count(self, tiny_encoded):
        assert all(t.raster.n_channels == 8 for t in tiny_encoded.trials)

    def test_requires_calibration(self, tiny_dataset):
        from propriospike.types import Dataset
        bare = Dataset(tiny_dataset.trials, tiny_dataset.class_names)
        with pytest.raises(InvalidInputError):
            from propriospike.spindle import encode_dataset
            encode_dataset(bare, EncoderConfig())


class TestEncoderConfig:
    def test_dict_roundtrip(self):
        cfg = EncoderConfig(gamma_s_pps=50.0, settle_ms=200)
        back = EncoderConfig.from_dict(cfg.to_dict())
        assert back == cfg

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            EncoderConfig(gamma_s_pps=-1.0)
        with pytest.raises(InvalidInputError):
            EncoderConfig(rate_cap_hz=2000.0)  # rate*dt above 1
        with pytest.raises(InvalidInputError):
            EncoderConfig(settle_ms=-5)
