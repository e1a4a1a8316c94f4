"""Synthetic grasp-trial generation.

Each trial follows a fixed exploration routine: light grasp, hold,
release, strong grasp, hold, lift, a weigh phase that moves the object up
and down twice, and a final put-down. Finger flexion readings ramp between
plateaus with smoothstep transitions; plateau depth is closure * stiffness
per finger. Object identity enters through the per-finger closures,
stiffness, and weigh-phase sag; trials vary by multiplicative size jitter,
a per-trial baseline drift of the sensor readings, and white noise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError
from .types import Dataset, SensorTrace, TrialRecord

DEFAULT_NOISE_STD = 0.01        # additive white noise, ~1% of dynamic range
DEFAULT_SIZE_JITTER = 0.03      # relative std of per-trial closure scaling
DEFAULT_DRIFT_STD = 0.2         # per-trial per-finger baseline offset std


@dataclass(frozen=True)
class ObjectPrototype:
    """Per-finger grasp parameters of one object class.

    light_closure, strong_closure: commanded flexion in [0, 1] for the two
        grasp strengths, per finger; light <= strong.
    stiffness: object compliance scaling of the reading, in (0, 1].
    weight_sag: absolute reading amplitude of the weigh-phase oscillation,
        in [0, 0.3].
    size_jitter: relative std of the per-trial closure scaling.
    """

    name: str
    light_closure: tuple[float, float, float, float]
    strong_closure: tuple[float, float, float, float]
    stiffness: tuple[float, float, float, float]
    weight_sag: tuple[float, float, float, float]
    size_jitter: float = DEFAULT_SIZE_JITTER

    def __post_init__(self):
        for field_name in ("light_closure", "strong_closure", "stiffness", "weight_sag"):
            vals = tuple(float(v) for v in getattr(self, field_name))
            if len(vals) != 4:
                raise InvalidInputError(f"{field_name} must have 4 entries")
            object.__setattr__(self, field_name, vals)
        for lo, hi in zip(self.light_closure, self.strong_closure):
            if not (0.0 <= lo <= hi <= 1.0):
                raise InvalidInputError(
                    f"closures must satisfy 0 <= light <= strong <= 1, "
                    f"got {lo} and {hi}")
        if any(not 0.0 < s <= 1.0 for s in self.stiffness):
            raise InvalidInputError("stiffness entries must be in (0, 1]")
        if any(not 0.0 <= w <= 0.3 for w in self.weight_sag):
            raise InvalidInputError("weight_sag entries must be in [0, 0.3]")
        if self.size_jitter < 0:
            raise InvalidInputError("size_jitter must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectPrototype":
        return cls(**d)


@dataclass(frozen=True)
class ExplorationSchedule:
    """Phase end times of the exploration routine, in ms from trial start."""

    light_end_ms: float = 400.0
    hold1_end_ms: float = 900.0
    release_end_ms: float = 1300.0
    strong_end_ms: float = 1800.0
    hold2_end_ms: float = 2400.0
    lift_end_ms: float = 2900.0
    weigh_end_ms: float = 5200.0
    total_ms: float = 6000.0
    sample_rate_hz: float = 350.0

    def __post_init__(self):
        bounds = (0.0, self.light_end_ms, self.hold1_end_ms, self.release_end_ms,
                  self.strong_end_ms, self.hold2_end_ms, self.lift_end_ms,
                  self.weigh_end_ms, self.total_ms)
        if any(later <= earlier for earlier, later in zip(bounds, bounds[1:])):
            raise InvalidInputError(f"phase boundaries must strictly increase: {bounds}")
        if self.sample_rate_hz <= 0:
            raise InvalidInputError("sample_rate_hz must be positive")

    @property
    def n_samples(self) -> int:
        """Samples covering [0, total_ms] inclusive."""
        return int(round(self.total_ms * self.sample_rate_hz / 1000.0)) + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExplorationSchedule":
        return cls(**d)


def _smoothstep(t: np.ndarray, t0: float, t1: float) -> np.ndarray:
    u = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _finger_profile(t_ms: np.ndarray, sched: ExplorationSchedule, light: float,
                    strong: float, sag: float) -> np.ndarray:
    s = sched
    out = np.empty_like(t_ms)

    seg = t_ms < s.light_end_ms
    out[seg] = light * _smoothstep(t_ms[seg], 0.0, s.light_end_ms)
    seg = (t_ms >= s.light_end_ms) & (t_ms < s.hold1_end_ms)
    out[seg] = light
    seg = (t_ms >= s.hold1_end_ms) & (t_ms < s.release_end_ms)
    out[seg] = light * (1.0 - _smoothstep(t_ms[seg], s.hold1_end_ms, s.release_end_ms))
    seg = (t_ms >= s.release_end_ms) & (t_ms < s.strong_end_ms)
    out[seg] = strong * _smoothstep(t_ms[seg], s.release_end_ms, s.strong_end_ms)
    seg = (t_ms >= s.strong_end_ms) & (t_ms < s.lift_end_ms)
    out[seg] = strong
    seg = (t_ms >= s.lift_end_ms) & (t_ms < s.weigh_end_ms)
    # two full up-down oscillations while weighing, continuous at both ends
    phase = (t_ms[seg] - s.lift_end_ms) / (s.weigh_end_ms - s.lift_end_ms)
    out[seg] = strong + sag * np.sin(4.0 * np.pi * phase)
    seg = t_ms >= s.weigh_end_ms
    out[seg] = strong * (1.0 - _smoothstep(t_ms[seg], s.weigh_end_ms, s.total_ms))
    return out


def synth_trial(proto: ObjectPrototype, sched: ExplorationSchedule,
                noise_std: float, seed: int, *,
                baseline_drift_std: float = 0.0) -> SensorTrace:
    """Generate one grasp trial as a raw sensor trace.

    Per-trial randomness (all from the one seed): a shared multiplicative
    closure jitter per finger, a baseline reading offset per finger, and
    additive white noise per sample.
    """
    if noise_std < 0 or baseline_drift_std < 0:
        raise InvalidInputError("noise_std and baseline_drift_std must be >= 0")
    if seed < 0:
        raise InvalidInputError(f"seed must be >= 0, got {seed}")
    rng = np.random.default_rng(seed)
    jitter = np.clip(rng.normal(1.0, proto.size_jitter, 4), 0.0, None)
    drift = rng.normal(0.0, baseline_drift_std, 4) if baseline_drift_std > 0 \
        else np.zeros(4)
    t_ms = np.arange(sched.n_samples) * (1000.0 / sched.sample_rate_hz)
    samples = np.empty((4, sched.n_samples))
    for f in range(4):
        light = proto.light_closure[f] * proto.stiffness[f] * jitter[f]
        strong = proto.strong_closure[f] * proto.stiffness[f] * jitter[f]
        samples[f] = _finger_profile(t_ms, sched, light, strong,
                                     proto.weight_sag[f]) + drift[f]
    if noise_std > 0:
        samples += rng.normal(0.0, noise_std, samples.shape)
    return SensorTrace(samples, sched.sample_rate_hz)


def synth_dataset(protos: list[ObjectPrototype], trials_per_class: int,
                  noise_std: float, base_seed: int, *,
                  baseline_drift_std: float = 0.0,
                  sched: ExplorationSchedule | None = None) -> Dataset:
    """Generate a labeled dataset of grasp trials.

    Trial seeds are base_seed + global trial index (class-major), so any
    subset regenerates identically. Calibration bounds are the global
    min/max reading over the generated data.
    """
    if trials_per_class < 1:
        raise InvalidInputError("trials_per_class must be >= 1")
    names = [p.name for p in protos]
    if len(set(names)) != len(names):
        raise InvalidInputError("prototype names must be unique")
    sched = sched or ExplorationSchedule()
    trials = []
    lo, hi = np.inf, -np.inf
    for c, proto in enumerate(protos):
        for i in range(trials_per_class):
            seed = base_seed + c * trials_per_class + i
            trace = synth_trial(proto, sched, noise_std, seed,
                                baseline_drift_std=baseline_drift_std)
            lo = min(lo, float(trace.samples.min()))
            hi = max(hi, float(trace.samples.max()))
            trials.append(TrialRecord(trace, c, seed, proto.name))
    return Dataset(tuple(trials), tuple(names), lo, hi)


def default_prototypes() -> list[ObjectPrototype]:
    """Ten object classes with graded confusability.

    Includes a stiffness pair (soft/hard ball), a size pair (cylinders),
    a weight pair separable only during the weigh phase (bottles), a
    two-finger object (flat box), and four fillers.
    """
    return [
        ObjectPrototype("soft_ball",
                        (0.45, 0.45, 0.40, 0.35), (0.80, 0.80, 0.75, 0.70),
                        (0.55, 0.55, 0.55, 0.55), (0.10, 0.10, 0.08, 0.06)),
        ObjectPrototype("hard_ball",
                        (0.45, 0.45, 0.40, 0.35), (0.80, 0.80, 0.75, 0.70),
                        (0.92, 0.92, 0.92, 0.92), (0.10, 0.10, 0.08, 0.06)),
        ObjectPrototype("small_cylinder",
                        (0.55, 0.60, 0.60, 0.55), (0.90, 0.95, 0.95, 0.90),
                        (0.85, 0.85, 0.85, 0.85), (0.12, 0.12, 0.10, 0.10)),
        ObjectPrototype("large_cylinder",
                        (0.30, 0.32, 0.32, 0.30), (0.55, 0.60, 0.60, 0.55),
                        (0.85, 0.85, 0.85, 0.85), (0.15, 0.15, 0.12, 0.12)),
        ObjectPrototype("flat_box",
                        (0.40, 0.42, 0.10, 0.08), (0.75, 0.78, 0.18, 0.15),
                        (0.90, 0.90, 0.90, 0.90), (0.12, 0.12, 0.02, 0.02)),
        ObjectPrototype("light_bottle",
                        (0.40, 0.42, 0.40, 0.38), (0.70, 0.72, 0.70, 0.68),
                        (0.75, 0.75, 0.75, 0.75), (0.03, 0.03, 0.02, 0.02)),
        ObjectPrototype("heavy_bottle",
                        (0.40, 0.42, 0.40, 0.38), (0.70, 0.72, 0.70, 0.68),
                        (0.75, 0.75, 0.75, 0.75), (0.22, 0.22, 0.18, 0.16)),
        ObjectPrototype("pen",
                        (0.70, 0.75, 0.25, 0.15), (0.95, 1.00, 0.45, 0.30),
                        (0.98, 0.98, 0.98, 0.98), (0.02, 0.02, 0.01, 0.01)),
        ObjectPrototype("mug",
                        (0.38, 0.40, 0.42, 0.40), (0.62, 0.66, 0.68, 0.66),
                        (0.88, 0.88, 0.88, 0.88), (0.14, 0.14, 0.12, 0.10)),
        ObjectPrototype("sponge",
                        (0.50, 0.50, 0.50, 0.48), (0.85, 0.88, 0.88, 0.85),
                        (0.30, 0.30, 0.30, 0.30), (0.04, 0.04, 0.03, 0.03)),
    ]
