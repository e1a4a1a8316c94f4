"""Shared fixtures: miniature datasets that keep unit tests fast.

The miniature exploration schedule compresses every phase tenfold
(600 ms instead of 6 s) so generation, encoding, and training stay in
the millisecond-to-second range while exercising every phase of the
routine.
"""

import numpy as np
import pytest

from propriospike.grasp import ExplorationSchedule, ObjectPrototype, synth_dataset
from propriospike.spindle import EncoderConfig, encode_dataset

TINY_TOTAL_MS = 600.0


def tiny_schedule() -> ExplorationSchedule:
    return ExplorationSchedule(
        light_end_ms=40.0, hold1_end_ms=90.0, release_end_ms=130.0,
        strong_end_ms=180.0, hold2_end_ms=240.0, lift_end_ms=290.0,
        weigh_end_ms=520.0, total_ms=TINY_TOTAL_MS, sample_rate_hz=350.0)


def tiny_prototypes() -> list[ObjectPrototype]:
    return [
        ObjectPrototype("squishy", (0.4, 0.4, 0.4, 0.4), (0.8, 0.8, 0.8, 0.8),
                        (0.4, 0.4, 0.4, 0.4), (0.05, 0.05, 0.05, 0.05)),
        ObjectPrototype("rigid", (0.4, 0.4, 0.4, 0.4), (0.8, 0.8, 0.8, 0.8),
                        (0.95, 0.95, 0.95, 0.95), (0.05, 0.05, 0.05, 0.05)),
        ObjectPrototype("pinch", (0.6, 0.6, 0.1, 0.1), (0.9, 0.9, 0.2, 0.2),
                        (0.8, 0.8, 0.8, 0.8), (0.02, 0.02, 0.02, 0.02)),
    ]


@pytest.fixture(scope="session")
def tiny_dataset():
    """3 classes x 6 trials of 600 ms traces with calibration bounds."""
    return synth_dataset(tiny_prototypes(), 6, 0.01, 7,
                         baseline_drift_std=0.1, sched=tiny_schedule())


@pytest.fixture(scope="session")
def tiny_encoded(tiny_dataset):
    """The tiny dataset with afferent rasters attached (600 bins)."""
    return encode_dataset(tiny_dataset, EncoderConfig())


@pytest.fixture(scope="session")
def tiny_spikes(tiny_encoded):
    from propriospike.training import stack_rasters
    return stack_rasters(tiny_encoded)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
