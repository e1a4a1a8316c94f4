"""Muscle-spindle afferent model and Poisson spike encoding.

Three intrafusal fibers (Bag1, Bag2, Chain) share a second-order tension
law: the sensory region (stiffness k_sr) in series with a polar region
(stiffness k_pr) whose damping is a signed power law of the stretch
velocity. Bag1's damping coefficient grows with dynamic fusimotor drive;
Bag2 and Chain receive static drive as an additive active-tension term.
Firing potentials are linear in sensory-region stretch; the Ia rate merges
Bag1 against Bag2+Chain with a partial-occlusion rule and the II rate
follows Bag2+Chain alone. Rates become spikes by per-bin Bernoulli draws
with p = rate * dt.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInputError
from .types import Dataset, FascicleTrace, RasterKind, SpikeRaster
from .signal import to_fascicle_1khz

DT_S = 1e-3  # integration and raster bin width
OCCLUSION_WEIGHT = 0.156  # contribution of the weaker generator to Ia
GAMMA_NORM_PPS = 100.0  # fusimotor pulses/s corresponding to unit drive

_ENCODE_CHUNK = 256  # trials integrated together (bounds the rate buffers)


class FiberKind(Enum):
    BAG1 = "bag1"
    BAG2 = "bag2"
    CHAIN = "chain"


@dataclass(frozen=True)
class FiberParams:
    """Constants of one intrafusal fiber.

    k_sr, k_pr: sensory/polar region stiffnesses (force per L_o).
    mass: polar region mass term.
    beta0: passive damping coefficient.
    beta_gamma: damping gain per unit normalized fusimotor drive.
    gamma_drive: active-tension gain per unit normalized drive.
    vel_exp: exponent of the power-law velocity dependence.
    vel_eps: below this |velocity| the power law is linearized, which
        keeps the 1 ms semi-implicit Euler step from chattering around
        equilibrium (the raw power law has infinite slope at zero).
    l_sr0, l_pr0: rest lengths of the two regions.
    gain: firing rate per unit sensory-region stretch (spikes/s).
    rate_offset: stretch subtracted before applying the gain.
    """

    k_sr: float = 10.0
    k_pr: float = 0.2
    mass: float = 2e-4
    beta0: float = 0.06
    beta_gamma: float = 0.0
    gamma_drive: float = 0.03
    vel_exp: float = 0.3
    vel_eps: float = 0.1
    l_sr0: float = 0.04
    l_pr0: float = 0.76
    gain: float = 4500.0
    rate_offset: float = 5e-4

    def __post_init__(self):
        if self.k_sr <= 0 or self.k_pr <= 0 or self.mass <= 0:
            raise InvalidInputError("k_sr, k_pr, and mass must be positive")
        if self.vel_exp <= 0 or self.vel_eps < 0:
            raise InvalidInputError("vel_exp must be positive and vel_eps >= 0")
        if self.gain < 0:
            raise InvalidInputError("gain must be >= 0")


DEFAULT_FIBER_PARAMS: dict[FiberKind, FiberParams] = {
    FiberKind.BAG1: FiberParams(beta0=0.05, beta_gamma=0.03, gamma_drive=0.0,
                                gain=50000.0, rate_offset=0.004),
    FiberKind.BAG2: FiberParams(k_pr=0.6, gain=9000.0, rate_offset=0.011),
    FiberKind.CHAIN: FiberParams(k_pr=0.6, gain=9000.0, rate_offset=0.011),
}


@dataclass(frozen=True)
class FiberState:
    """Tension and tension rate of one fiber's sensory region."""

    tension: float = 0.0
    tension_rate: float = 0.0


@dataclass(frozen=True)
class AfferentRates:
    """Instantaneous Ia and II firing rates in spikes/s."""

    ia: float
    ii: float


@dataclass(frozen=True)
class EncoderConfig:
    """Spindle encoder configuration: fiber constants and drive levels."""

    bag1: FiberParams = DEFAULT_FIBER_PARAMS[FiberKind.BAG1]
    bag2: FiberParams = DEFAULT_FIBER_PARAMS[FiberKind.BAG2]
    chain: FiberParams = DEFAULT_FIBER_PARAMS[FiberKind.CHAIN]
    gamma_s_pps: float = 70.0
    gamma_d_pps: float = 70.0
    rate_cap_hz: float = 250.0
    settle_ms: int = 500

    def __post_init__(self):
        if self.gamma_s_pps < 0 or self.gamma_d_pps < 0:
            raise InvalidInputError("fusimotor drives must be >= 0")
        if not 0 < self.rate_cap_hz * DT_S <= 1.0:
            raise InvalidInputError(
                f"rate_cap_hz must keep rate*dt in (0, 1], got {self.rate_cap_hz}")
        if self.settle_ms < 0:
            raise InvalidInputError("settle_ms must be >= 0")

    @property
    def gamma_s(self) -> float:
        return self.gamma_s_pps / GAMMA_NORM_PPS

    @property
    def gamma_d(self) -> float:
        return self.gamma_d_pps / GAMMA_NORM_PPS

    def params(self, kind: FiberKind) -> FiberParams:
        return {FiberKind.BAG1: self.bag1, FiberKind.BAG2: self.bag2,
                FiberKind.CHAIN: self.chain}[kind]

    def drive(self, kind: FiberKind) -> float:
        return self.gamma_d if kind is FiberKind.BAG1 else self.gamma_s

    def to_dict(self) -> dict:
        return {
            "bag1": asdict(self.bag1),
            "bag2": asdict(self.bag2),
            "chain": asdict(self.chain),
            "gamma_s_pps": self.gamma_s_pps,
            "gamma_d_pps": self.gamma_d_pps,
            "rate_cap_hz": self.rate_cap_hz,
            "settle_ms": self.settle_ms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        kw = dict(d)
        for key in ("bag1", "bag2", "chain"):
            if key in kw:
                kw[key] = FiberParams(**kw[key])
        return cls(**kw)


@dataclass(frozen=True)
class SpindleState:
    """Per-fiber states of one spindle."""

    bag1: FiberState = FiberState()
    bag2: FiberState = FiberState()
    chain: FiberState = FiberState()

    def fiber(self, kind: FiberKind) -> FiberState:
        return {FiberKind.BAG1: self.bag1, FiberKind.BAG2: self.bag2,
                FiberKind.CHAIN: self.chain}[kind]


def _friction(dv: np.ndarray, p: FiberParams) -> np.ndarray:
    """Signed power-law velocity factor, linearized below vel_eps."""
    mag = np.abs(dv)
    power = np.sign(dv) * mag ** p.vel_exp
    if p.vel_eps > 0.0:
        linear = dv * (p.vel_eps ** p.vel_exp / p.vel_eps)
        return np.where(mag < p.vel_eps, linear, power)
    return power


def _fiber_step_arrays(tension, rate, p: FiberParams, L, Ldot, gamma):
    """One semi-implicit Euler step of the tension law (elementwise)."""
    beta = p.beta0 + p.beta_gamma * gamma
    dv = Ldot - rate / p.k_sr
    polar = L - p.l_sr0 - tension / p.k_sr
    bracket = (beta * _friction(dv, p) * polar
               + p.k_pr * (polar - p.l_pr0)
               + p.gamma_drive * gamma
               - tension)
    new_rate = rate + DT_S * (p.k_sr / p.mass) * bracket
    new_tension = tension + DT_S * new_rate
    slack = new_tension < 0.0
    new_tension = np.where(slack, 0.0, new_tension)
    new_rate = np.where(slack, 0.0, new_rate)
    return new_tension, new_rate


def fiber_step(state: FiberState, params: FiberParams, L: float, Ldot: float,
               gamma: float, dt: float = DT_S) -> FiberState:
    """Advance one fiber by one 1 ms step."""
    if dt != DT_S:
        raise InvalidInputError(f"the integrator is fixed at dt = {DT_S} s")
    if not (np.isfinite(L) and np.isfinite(Ldot) and np.isfinite(gamma)):
        raise InvalidInputError("L, Ldot, and gamma must be finite")
    t, r = _fiber_step_arrays(np.float64(state.tension), np.float64(state.tension_rate),
                              params, np.float64(L), np.float64(Ldot), np.float64(gamma))
    return FiberState(float(t), float(r))


def fiber_potential(state: FiberState, params: FiberParams) -> float:
    """Rectified firing potential of one fiber in spikes/s."""
    stretch = state.tension / params.k_sr
    return max(0.0, params.gain * (stretch - params.rate_offset))


def occlusion(primary: float, secondary: float) -> float:
    """Merge two Ia generator potentials: winner plus a fraction of the loser."""
    if primary < 0 or secondary < 0:
        raise InvalidInputError("occlusion inputs must be >= 0")
    return max(primary, secondary) + OCCLUSION_WEIGHT * min(primary, secondary)


def steady_state_tension(params: FiberParams, L: float, gamma: float) -> float:
    """Closed-form equilibrium tension for constant L and zero velocity."""
    t = (params.k_pr * (L - params.l_sr0 - params.l_pr0)
         + params.gamma_drive * gamma) / (1.0 + params.k_pr / params.k_sr)
    return max(0.0, t)


def steady_state(config: EncoderConfig, L: float) -> SpindleState:
    """Equilibrium spindle state for a held length under config drives."""
    return SpindleState(*(
        FiberState(steady_state_tension(config.params(k), L, config.drive(k)), 0.0)
        for k in (FiberKind.BAG1, FiberKind.BAG2, FiberKind.CHAIN)))


def steady_rates(config: EncoderConfig, L: float) -> AfferentRates:
    """Analytic steady-state Ia/II rates for a held length."""
    state = steady_state(config, L)
    b1 = fiber_potential(state.bag1, config.bag1)
    b2c = (fiber_potential(state.bag2, config.bag2)
           + fiber_potential(state.chain, config.chain))
    return AfferentRates(min(occlusion(b1, b2c), config.rate_cap_hz),
                         min(b2c, config.rate_cap_hz))


def spindle_step(state: SpindleState, config: EncoderConfig, L: float,
                 Ldot: float) -> tuple[SpindleState, AfferentRates]:
    """Advance all three fibers one step and read out afferent rates."""
    new = {}
    pots = {}
    for kind in FiberKind:
        p = config.params(kind)
        fs = fiber_step(state.fiber(kind), p, L, Ldot, config.drive(kind))
        new[kind] = fs
        pots[kind] = fiber_potential(fs, p)
    ia = min(occlusion(pots[FiberKind.BAG1],
                       pots[FiberKind.BAG2] + pots[FiberKind.CHAIN]),
             config.rate_cap_hz)
    ii = min(pots[FiberKind.BAG2] + pots[FiberKind.CHAIN], config.rate_cap_hz)
    return (SpindleState(new[FiberKind.BAG1], new[FiberKind.BAG2],
                         new[FiberKind.CHAIN]),
            AfferentRates(float(ia), float(ii)))


def poisson_spikes(rate_series: np.ndarray, dt: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Sample spikes with per-bin probability p = rate * dt."""
    rates = np.asarray(rate_series, dtype=np.float64)
    if not np.all(np.isfinite(rates)) or np.any(rates < 0):
        raise InvalidInputError("rates must be finite and >= 0")
    p = rates * dt
    if np.any(p > 1.0):
        raise InvalidInputError(
            f"rate*dt exceeds 1 (max {p.max():.3f}); lower the rates or dt")
    return (rng.random(rates.shape) < p).astype(np.uint8)


def _rate_series_batch(L: np.ndarray, Ldot: np.ndarray,
                       config: EncoderConfig, settle_ms: int):
    """Integrate spindles over (N, 4, T) kinematics; returns Ia/II series.

    Fibers start at the analytic steady state for the first sample and
    settle for settle_ms steps at that held length before the trace runs.
    """
    n, n_ch, T = L.shape
    kinds = (FiberKind.BAG1, FiberKind.BAG2, FiberKind.CHAIN)
    params = [config.params(k) for k in kinds]
    drives = [config.drive(k) for k in kinds]
    tension = [
        np.maximum((p.k_pr * (L[:, :, 0] - p.l_sr0 - p.l_pr0) + p.gamma_drive * g)
                   / (1.0 + p.k_pr / p.k_sr), 0.0)
        for p, g in zip(params, drives)
    ]
    rate = [np.zeros((n, n_ch)) for _ in kinds]
    L0 = L[:, :, 0]
    zero = np.zeros_like(L0)
    for _ in range(settle_ms):
        for i, (p, g) in enumerate(zip(params, drives)):
            tension[i], rate[i] = _fiber_step_arrays(tension[i], rate[i], p, L0, zero, g)
    ia = np.empty((n, n_ch, T))
    ii = np.empty((n, n_ch, T))
    cap = config.rate_cap_hz
    for t in range(T):
        pots = []
        for i, (p, g) in enumerate(zip(params, drives)):
            tension[i], rate[i] = _fiber_step_arrays(
                tension[i], rate[i], p, L[:, :, t], Ldot[:, :, t], g)
            pots.append(np.maximum(0.0, p.gain * (tension[i] / p.k_sr - p.rate_offset)))
        b2c = pots[1] + pots[2]
        ia[:, :, t] = np.minimum(
            np.maximum(pots[0], b2c) + OCCLUSION_WEIGHT * np.minimum(pots[0], b2c), cap)
        ii[:, :, t] = np.minimum(b2c, cap)
    return ia, ii


def _raster_from_rates(ia: np.ndarray, ii: np.ndarray, seed: int) -> SpikeRaster:
    """Draw Poisson spikes for one trial's (4, T) rate series.

    Raster channel order interleaves afferents per finger:
    [thumb-Ia, thumb-II, index-Ia, index-II, ...]. Each channel has its
    own generator seeded by (trial seed, channel index), so channels can
    be sampled concurrently or in any order.
    """
    n_ch, T = ia.shape
    spikes = np.empty((2 * n_ch, T), dtype=np.uint8)
    for c in range(n_ch):
        spikes[2 * c] = poisson_spikes(ia[c], DT_S, np.random.default_rng([seed, 2 * c]))
        spikes[2 * c + 1] = poisson_spikes(ii[c], DT_S,
                                           np.random.default_rng([seed, 2 * c + 1]))
    return SpikeRaster(spikes, RasterKind.AFFERENT)


def encode_trial(fascicle: FascicleTrace, config: EncoderConfig,
                 seed: int) -> SpikeRaster:
    """Encode one trial's fascicle kinematics into an 8-channel raster."""
    if seed < 0:
        raise InvalidInputError(f"seed must be >= 0, got {seed}")
    ia, ii = _rate_series_batch(fascicle.lengths[None], fascicle.velocities[None],
                                config, config.settle_ms)
    return _raster_from_rates(ia[0], ii[0], seed)


def encode_dataset(dataset: Dataset, config: EncoderConfig) -> Dataset:
    """Encode every trial of a dataset, attaching 8-channel rasters.

    Traces are resampled to 1 kHz, cropped to one sample per ms of their
    span, and normalized with the dataset's calibration bounds. Trials are
    integrated in batches; results are identical to per-trial encode_trial
    calls with each trial's own seed.
    """
    if dataset.reading_min is None:
        raise InvalidInputError("dataset has no calibration bounds; cannot encode")
    trials = list(dataset.trials)
    out = []
    for lo in range(0, len(trials), _ENCODE_CHUNK):
        chunk = trials[lo:lo + _ENCODE_CHUNK]
        fascicles = [
            to_fascicle_1khz(tr.trace, dataset.reading_min, dataset.reading_max,
                             n_bins=int(round(tr.trace.duration_s * 1000.0)))
            for tr in chunk
        ]
        n_bins = {f.n_samples for f in fascicles}
        if len(n_bins) != 1:
            raise InvalidInputError("all trials in a dataset must share one duration")
        L = np.stack([f.lengths for f in fascicles])
        Ld = np.stack([f.velocities for f in fascicles])
        ia, ii = _rate_series_batch(L, Ld, config, config.settle_ms)
        for i, tr in enumerate(chunk):
            out.append(tr.with_raster(_raster_from_rates(ia[i], ii[i], tr.seed)))
    return Dataset(tuple(out), dataset.class_names, dataset.reading_min,
                   dataset.reading_max)
