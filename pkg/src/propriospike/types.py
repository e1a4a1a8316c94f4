"""Core data types for sensor traces, spike rasters, and trial datasets.

All array-holding types are immutable after construction: arrays are copied in,
validated, and marked read-only, so instances can be shared freely between
threads and processes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import InvalidInputError

DEFAULT_CHANNEL_NAMES = ("thumb", "index", "middle", "ring")

# Fascicle lengths are normalized to optimal length L_o; the sensor mapping
# targets [0.95, 1.08] and this band adds headroom for retuned mappings.
FASCICLE_L_MIN = 0.90
FASCICLE_L_MAX = 1.15


class RasterKind(Enum):
    """What the channel axis of a SpikeRaster means."""

    AFFERENT = "afferent"  # 4 sensors x {Ia, II} = 8 channels
    NETWORK = "network"    # one channel per neuron in a layer


def _frozen_array(values, dtype, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SensorTrace:
    """A multi-finger stretch-sensor recording.

    samples: (4, n_samples) raw sensor readings, one row per finger.
    sample_rate_hz: sampling rate of the columns.
    channel_names: finger labels, one per row.
    """

    samples: np.ndarray
    sample_rate_hz: float
    channel_names: tuple[str, ...] = DEFAULT_CHANNEL_NAMES

    def __post_init__(self):
        arr = _frozen_array(self.samples, np.float64, "samples", 2)
        if arr.shape[0] != 4:
            raise InvalidInputError(f"expected 4 sensor channels, got {arr.shape[0]}")
        if arr.shape[1] < 2:
            raise InvalidInputError("a trace needs at least 2 samples")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("samples contain non-finite values")
        if not self.sample_rate_hz > 0:
            raise InvalidInputError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if len(self.channel_names) != 4:
            raise InvalidInputError("channel_names must have 4 entries")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "channel_names", tuple(self.channel_names))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        """Span between first and last sample instants."""
        return (self.n_samples - 1) / self.sample_rate_hz

    @property
    def times_ms(self) -> np.ndarray:
        return np.arange(self.n_samples) * (1000.0 / self.sample_rate_hz)


@dataclass(frozen=True)
class FascicleTrace:
    """Normalized fascicle-length kinematics at a fixed 1 kHz rate.

    lengths: (4, n_samples) in units of optimal length L_o,
        within [0.90, 1.15].
    velocities: (4, n_samples) in L_o per second.
    """

    lengths: np.ndarray
    velocities: np.ndarray

    SAMPLE_RATE_HZ = 1000.0

    def __post_init__(self):
        L = _frozen_array(self.lengths, np.float64, "lengths", 2)
        Ld = _frozen_array(self.velocities, np.float64, "velocities", 2)
        if L.shape[0] != 4 or Ld.shape != L.shape:
            raise InvalidInputError(
                f"lengths/velocities must both be (4, n), got {L.shape} and {Ld.shape}")
        if not np.all(np.isfinite(L)) or not np.all(np.isfinite(Ld)):
            raise InvalidInputError("fascicle kinematics contain non-finite values")
        if L.min() < FASCICLE_L_MIN or L.max() > FASCICLE_L_MAX:
            raise InvalidInputError(
                f"lengths outside [{FASCICLE_L_MIN}, {FASCICLE_L_MAX}]: "
                f"range [{L.min():.4f}, {L.max():.4f}]")
        object.__setattr__(self, "lengths", L)
        object.__setattr__(self, "velocities", Ld)

    @property
    def n_samples(self) -> int:
        return self.lengths.shape[1]


@dataclass(frozen=True)
class SpikeRaster:
    """A binary spike raster with 1 ms bins.

    spikes: (n_channels, n_steps) uint8 array of 0/1 values.
    kind: AFFERENT rasters have exactly 8 channels
        (thumb-Ia, thumb-II, index-Ia, index-II, middle-Ia, middle-II,
        ring-Ia, ring-II); NETWORK rasters have one channel per neuron.
    """

    spikes: np.ndarray
    kind: RasterKind = RasterKind.AFFERENT

    DT_MS = 1.0

    def __post_init__(self):
        arr = np.asarray(self.spikes)
        if arr.ndim != 2:
            raise InvalidInputError(f"spikes must be 2-dimensional, got shape {arr.shape}")
        if not np.all((arr == 0) | (arr == 1)):
            raise InvalidInputError("spikes must contain only 0 and 1")
        arr = arr.astype(np.uint8).copy()
        arr.setflags(write=False)
        if self.kind is RasterKind.AFFERENT and arr.shape[0] != 8:
            raise InvalidInputError(
                f"afferent rasters have 8 channels, got {arr.shape[0]}")
        object.__setattr__(self, "spikes", arr)

    @property
    def n_channels(self) -> int:
        return self.spikes.shape[0]

    @property
    def n_steps(self) -> int:
        return self.spikes.shape[1]

    def counts(self) -> np.ndarray:
        """Total spike count per channel."""
        return self.spikes.sum(axis=1).astype(np.int64)


@dataclass(frozen=True)
class TrialRecord:
    """One grasp trial: raw trace, optional encoded raster, and labeling.

    The raster, when present, covers the trace's time span at 1 kHz
    (one bin per ms, within one bin of rounding at the boundary).
    """

    trace: SensorTrace
    label: int
    seed: int
    object_name: str
    raster: SpikeRaster | None = None

    def __post_init__(self):
        if self.label < 0:
            raise InvalidInputError(f"label must be >= 0, got {self.label}")
        if self.seed < 0:
            raise InvalidInputError(f"seed must be >= 0, got {self.seed}")
        if self.raster is not None:
            if self.raster.kind is not RasterKind.AFFERENT:
                raise InvalidInputError("trial rasters must be afferent rasters")
            span_ms = self.trace.duration_s * 1000.0
            if abs(self.raster.n_steps - span_ms) > 1.0:
                raise InvalidInputError(
                    f"raster length {self.raster.n_steps} does not match trace span "
                    f"{span_ms:.1f} ms at 1 kHz")

    def with_raster(self, raster: SpikeRaster) -> "TrialRecord":
        return replace(self, raster=raster)


@dataclass(frozen=True)
class Dataset:
    """A labeled collection of grasp trials plus sensor calibration bounds.

    reading_min/reading_max map raw sensor units to normalized fascicle
    length; they are dataset-level constants recorded at generation time.
    """

    trials: tuple[TrialRecord, ...]
    class_names: tuple[str, ...]
    reading_min: float | None = None
    reading_max: float | None = None

    def __post_init__(self):
        trials = tuple(self.trials)
        names = tuple(self.class_names)
        for tr in trials:
            if tr.label >= len(names):
                raise InvalidInputError(
                    f"label {tr.label} out of range for {len(names)} classes")
        if (self.reading_min is None) != (self.reading_max is None):
            raise InvalidInputError("reading_min and reading_max must be set together")
        if self.reading_min is not None and not self.reading_min < self.reading_max:
            raise InvalidInputError(
                f"reading_min must be < reading_max, got "
                f"[{self.reading_min}, {self.reading_max}]")
        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "class_names", names)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return len(self.trials)

    def labels(self) -> np.ndarray:
        return np.array([t.label for t in self.trials], dtype=np.int64)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels(), minlength=self.n_classes)
