"""Proprioceptive grasp-trial classification with spiking networks.

Pipeline: synthesize 4-finger stretch-sensor traces for graspable object
classes, encode them into 8-channel afferent spike rasters with a muscle
spindle model, and classify with a hybrid spiking network (resonate-and-
fire input layer + current-based LIF layers) trained by surrogate-gradient
BPTT, benchmarked against kNN baselines.
"""

from .baselines import dataset_features, features_rate, features_raw, knn_predict
from .errors import InvalidInputError, NumericalBlowupError
from .estimators import (HybridSNNClassifier, KNNBaselineClassifier,
                         RateWindowFeatures, SpindleEncoder)
from .evaluate import (ExperimentConfig, ExperimentResult, accuracy,
                       accuracy_over_time, confusion_matrix, eval_network,
                       run_experiment, svg_line_chart)
from .grasp import (ExplorationSchedule, ObjectPrototype, default_prototypes,
                    synth_dataset, synth_trial)
from .io import (load_dataset, load_json, load_raster, load_trace,
                 save_dataset, save_json, save_raster, save_trace)
from .network import (CubaParams, NetworkParams, NetworkWeights, RfParams,
                      decide, decide_prefix, forward, init_weights,
                      load_checkpoint, save_checkpoint)
from .signal import (normalize_to_fascicle, resample_linear, split_dataset,
                     stratified_split_indices, to_fascicle_1khz)
from .spindle import (AfferentRates, EncoderConfig, FiberKind, FiberParams,
                      FiberState, SpindleState, encode_dataset, encode_trial,
                      fiber_potential, fiber_step, occlusion, poisson_spikes,
                      spindle_step, steady_rates, steady_state)
from .training import (TrainConfig, TrainResult, count_loss, soft_forward,
                       surrogate_grad, target_counts, train, train_arrays)
from .types import (Dataset, FascicleTrace, RasterKind, SensorTrace,
                    SpikeRaster, TrialRecord)

__version__ = "0.1.0"

__all__ = [
    "AfferentRates", "CubaParams", "Dataset", "EncoderConfig",
    "ExperimentConfig", "ExperimentResult", "ExplorationSchedule",
    "FascicleTrace", "FiberKind", "FiberParams", "FiberState",
    "HybridSNNClassifier", "InvalidInputError", "KNNBaselineClassifier",
    "NetworkParams", "NetworkWeights", "NumericalBlowupError",
    "ObjectPrototype", "RasterKind", "RateWindowFeatures", "RfParams",
    "SensorTrace", "SpikeRaster", "SpindleEncoder", "SpindleState",
    "TrainConfig", "TrainResult", "TrialRecord",
    "accuracy", "accuracy_over_time", "confusion_matrix", "count_loss",
    "dataset_features", "decide", "decide_prefix", "default_prototypes",
    "encode_dataset", "encode_trial", "eval_network", "features_rate",
    "features_raw", "fiber_potential", "fiber_step", "forward",
    "init_weights", "knn_predict", "load_checkpoint", "load_dataset",
    "load_json", "load_raster", "load_trace", "normalize_to_fascicle",
    "occlusion", "poisson_spikes", "resample_linear", "run_experiment",
    "save_checkpoint", "save_dataset", "save_json", "save_raster",
    "save_trace", "soft_forward", "spindle_step", "split_dataset",
    "steady_rates", "steady_state", "stratified_split_indices",
    "surrogate_grad", "svg_line_chart", "target_counts", "to_fascicle_1khz",
    "train", "train_arrays",
]
