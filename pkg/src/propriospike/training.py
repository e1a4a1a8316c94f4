"""Surrogate-gradient BPTT training of the spiking classifier.

The loss is a squared error on output spike counts normalized by the
window length: the correct class's neuron is pushed toward firing in
half the bins, all others toward one tenth. Backpropagation runs through
the unrolled layer recurrences with two substitutions:

  * the spike threshold derivative is replaced by the symmetric
    exponential surrogate (1/width) * exp(-|u - thr| / width);
  * resets are treated as multiplications by a constant keep-mask
    (straight-through truncation), so no gradient flows through the
    reset assignment itself.

With those substitutions the backward pass is the exact gradient of a
differentiable relaxation of the network: the hard step H(u) replaced by
its soft antiderivative counterpart sigma(u) (sigma' = surrogate) and
the reset masks frozen. soft_forward() evaluates that relaxation
directly, which is what makes finite-difference checking of the
production backward pass possible; the hard loss itself is piecewise
constant in the weights, so its finite differences are zero almost
everywhere.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .errors import InvalidInputError, NumericalBlowupError
from .network import (NetworkParams, NetworkWeights, decide, forward,
                      init_weights)
from .signal import stratified_split_indices
from .types import Dataset

TARGET_POS_RATIO = 0.5
TARGET_NEG_RATIO = 0.1

_SCRATCH: dict = {}
_ALLOCATOR_TUNED = False


def _tune_allocator() -> None:
    """Keep large heap blocks resident across training batches.

    Every batch allocates a handful of ~100 MB temporaries. glibc's
    default policy serves those from fresh mmaps and returns them to the
    kernel on free, so each batch re-faults (and the kernel re-zeroes)
    gigabytes of pages; raising the mmap and trim thresholds makes the
    allocator recycle the same arena instead, which measures ~25% faster
    epochs here. Best effort: silently skipped on non-glibc platforms.
    """
    global _ALLOCATOR_TUNED
    if _ALLOCATOR_TUNED:
        return
    _ALLOCATOR_TUNED = True
    try:
        import ctypes
        libc = ctypes.CDLL("libc.so.6")
        m_mmap_threshold, m_trim_threshold = -3, -1
        libc.mallopt(m_mmap_threshold, 1 << 30)
        libc.mallopt(m_trim_threshold, 1 << 30)
    except Exception:
        pass


def _scratch(n: int, dtype) -> np.ndarray:
    """A reusable flat buffer of at least n elements of the given dtype.

    The backward pass materializes one surrogate-derivative array per
    layer; reusing one allocation across layers, batches, and epochs
    keeps the hot loop free of large page-faulting allocations.
    """
    key = np.dtype(dtype).str
    buf = _SCRATCH.get(key)
    if buf is None or buf.size < n:
        buf = np.empty(n, dtype)
        _SCRATCH[key] = buf
    return buf[:n]


def surrogate_grad(v, threshold: float, width: float):
    """Symmetric exponential surrogate for the spike derivative."""
    if width <= 0:
        raise InvalidInputError("width must be positive")
    return np.exp(-np.abs(np.asarray(v) - threshold) / width) / width


def soft_spike(v, threshold: float, width: float):
    """Antiderivative of surrogate_grad: exp((v-thr)/w) below threshold,
    2 - exp(-(v-thr)/w) above. Ranges over (0, 2) with value 1 at
    threshold; only used by the differentiable relaxation."""
    d = (np.asarray(v, dtype=np.float64) - threshold) / width
    out = np.empty_like(d)
    below = d <= 0
    out[below] = np.exp(d[below])
    out[~below] = 2.0 - np.exp(-d[~below])
    return out


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    batch_size: int = 16
    target_pos_ratio: float = TARGET_POS_RATIO
    target_neg_ratio: float = TARGET_NEG_RATIO
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    val_fraction: float = 0.1
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise InvalidInputError("val_fraction must be in [0, 1)")
        if not 0 <= self.target_neg_ratio < self.target_pos_ratio <= 1:
            raise InvalidInputError(
                "need 0 <= target_neg_ratio < target_pos_ratio <= 1")
        if self.dtype not in ("float32", "float64"):
            raise InvalidInputError("dtype must be 'float32' or 'float64'")
        if self.seed < 0:
            raise InvalidInputError("seed must be >= 0")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def target_counts(n_bins: int, n_classes: int, true_class: int,
                  pos_ratio: float = TARGET_POS_RATIO,
                  neg_ratio: float = TARGET_NEG_RATIO) -> np.ndarray:
    """Desired output spike counts: pos_ratio*T for the true class,
    neg_ratio*T elsewhere."""
    if not 0 <= true_class < n_classes:
        raise InvalidInputError(
            f"true_class must be in [0, {n_classes}), got {true_class}")
    out = np.full(n_classes, neg_ratio * n_bins)
    out[true_class] = pos_ratio * n_bins
    return out


def count_loss(counts: np.ndarray, labels: np.ndarray, n_bins: int,
               pos_ratio: float, neg_ratio: float):
    """Squared count error normalized by window length, averaged over the
    batch: 0.5 * sum((counts - target)^2) / n_bins per trial.

    Returns (loss, dloss/dcounts) with dloss/dcounts =
    (counts - target) / (n_bins * batch).
    """
    B, K = counts.shape
    targets = np.full((B, K), neg_ratio * n_bins)
    targets[np.arange(B), labels] = pos_ratio * n_bins
    diff = counts.astype(np.float64) - targets
    loss = 0.5 * float(np.sum(diff * diff)) / (n_bins * B)
    return loss, diff / (n_bins * B)


def backward(weights: NetworkWeights, params: NetworkParams, traj,
             gs3: np.ndarray) -> NetworkWeights:
    """Gradients of the relaxed loss w.r.t. all weights.

    traj is the tuple returned by forward(..., return_state=True); gs3 is
    dloss/d(output spikes), shape (T, B, n_out). Returns a NetworkWeights
    of float64 gradients. The frozen reset masks are the stored spike
    trains; surrogate derivatives are precomputed from the pre-reset
    states so the reverse scans stay free of exp calls. A relaxed
    trajectory (float spike arrays from soft_forward) takes the same
    path, with the masks recovered from its pre-reset states.
    """
    s0, s1, state1, s2, vpre2, s3, vpre3 = traj
    T, B, _ = gs3.shape
    dt = gs3.dtype.type
    p = params.cuba
    ki, kv = dt(1.0 - p.alpha_i), dt(1.0 - p.alpha_v)
    wd = dt(params.surrogate_width)

    def surr(pre, thr):
        d = _scratch(pre.size, pre.dtype).reshape(pre.shape)
        _kernels.surr_arg(pre.reshape(-1), dt(thr), dt(1.0 / wd),
                          dt(-np.log(wd)), d.reshape(-1))
        np.exp(d, out=d)
        return d

    def reset_mask(s_arr, pre, thr):
        if s_arr.dtype == np.uint8:
            return s_arr
        return np.greater_equal(pre, thr).view(np.uint8)

    def cuba_bwd(gs, vpre, s_arr):
        g = _kernels.cuba_backward(
            gs.reshape(T, -1), surr(vpre, p.threshold).reshape(T, -1),
            reset_mask(s_arr, vpre, p.threshold).reshape(T, -1), ki, kv)
        return g.reshape(gs.shape)

    def weight_grad(gx, s_prev):
        flat_g = gx[1:].reshape((T - 1) * B, -1)
        flat_s = s_prev[:-1].reshape((T - 1) * B, -1)
        return _kernels.spike_weight_grad(flat_s, flat_g).T.astype(np.float64)

    def spike_grad(gx, w):
        gs = np.empty(gx.shape[:2] + (w.shape[1],), dtype=gx.dtype)
        gs[-1] = 0.0
        np.dot(gx[1:].reshape((T - 1) * B, -1), w.astype(gx.dtype),
               out=gs[:-1].reshape((T - 1) * B, -1))
        return gs

    gx3 = cuba_bwd(gs3, vpre3, s3)
    gw3 = weight_grad(gx3, s2)
    gs2 = spike_grad(gx3, weights.w3)
    gx2 = cuba_bwd(gs2, vpre2, s2)
    gw2 = weight_grad(gx2, s1)
    gs1 = spike_grad(gx2, weights.w2)
    if params.arch == "hybrid":
        c1, c2 = params.rf.rotation
        gw_re, gw_im = _kernels.rf_backward_wgrad(
            gs1, surr(state1, params.rf.threshold),
            reset_mask(s1, state1, params.rf.threshold), s0, dt(c1), dt(c2))
        gw_re = gw_re.T.astype(np.float64)
        gw_im = gw_im.T.astype(np.float64)
    else:
        gw_re = _kernels.cuba_backward_wgrad(
            gs1, surr(state1, p.threshold),
            reset_mask(s1, state1, p.threshold), s0, ki, kv)
        gw_re = gw_re.T.astype(np.float64)
        gw_im = None
    return NetworkWeights(gw_re, gw_im, gw2, gw3)


def batch_gradients(weights: NetworkWeights, params: NetworkParams,
                    spikes_in: np.ndarray, labels: np.ndarray,
                    cfg: TrainConfig):
    """Hard forward + surrogate backward on one batch.

    Returns (loss, gradients, predictions).
    """
    traj = forward(weights, params, spikes_in, dtype=cfg.np_dtype,
                   return_state=True)
    s3 = traj[5]
    T, B, K = s3.shape
    counts = s3.sum(axis=0, dtype=np.float64)
    loss, dcounts = count_loss(counts, labels, T,
                               cfg.target_pos_ratio, cfg.target_neg_ratio)
    gs3 = np.broadcast_to(dcounts.astype(cfg.np_dtype), (T, B, K)).copy()
    grads = backward(weights, params, traj, gs3)
    preds, _ = decide(s3)
    return loss, grads, preds


def soft_forward(weights: NetworkWeights, params: NetworkParams,
                 spikes_in: np.ndarray, masks=None):
    """Differentiable relaxation of forward(..., return_state=True).

    Spike outputs are soft_spike(pre-state) instead of 0/1, and resets
    multiply by keep-masks. With masks=None the masks come from threshold
    crossings of this trajectory and are returned for reuse; passing them
    back in freezes the relaxation so that central finite differences of
    the loss equal the backward() gradients. float64, numpy only.
    """
    wd = params.surrogate_width
    s0 = np.ascontiguousarray(spikes_in.transpose(2, 0, 1)).astype(np.float64)
    T, B, _ = s0.shape
    frozen = masks is not None
    out_masks = []

    def dense_drive(s, w):
        x = np.empty((T, B, w.shape[0]), dtype=np.float64)
        x[0] = 0.0
        np.dot(s[:-1].reshape((T - 1) * B, -1), w.T,
               out=x[1:].reshape((T - 1) * B, -1))
        return x

    def soft_cuba(x, layer):
        p = params.cuba
        ki, kv = 1.0 - p.alpha_i, 1.0 - p.alpha_v
        cur = np.zeros(x.shape[1:])
        v = np.zeros(x.shape[1:])
        sig = np.empty_like(x)
        vpre = np.empty_like(x)
        keep = masks[layer] if frozen else np.empty(x.shape, dtype=bool)
        for t in range(T):
            cur = ki * cur + x[t]
            vp = kv * v + cur
            vpre[t] = vp
            sig[t] = soft_spike(vp, p.threshold, wd)
            if not frozen:
                keep[t] = vp < p.threshold
            v = vp * keep[t]
        out_masks.append(keep)
        return sig, vpre

    def soft_rf(xre, xim):
        c1, c2 = params.rf.rotation
        thr = params.rf.threshold
        re = np.zeros(xre.shape[1:])
        im = np.zeros(xre.shape[1:])
        sig = np.empty_like(xre)
        im_pre = np.empty_like(xre)
        keep = masks[0] if frozen else np.empty(xre.shape, dtype=bool)
        for t in range(T):
            rp = c1 * re - c2 * im + xre[t]
            ip = c2 * re + c1 * im + xim[t]
            im_pre[t] = ip
            sig[t] = soft_spike(ip, thr, wd)
            if not frozen:
                keep[t] = ip < thr
            re = rp * keep[t]
            im = ip
        out_masks.append(keep)
        return sig, im_pre

    if params.arch == "hybrid":
        s1, state1 = soft_rf(dense_drive(s0, weights.w_in_re),
                             dense_drive(s0, weights.w_in_im))
    else:
        s1, state1 = soft_cuba(dense_drive(s0, weights.w_in_re), 0)
    s2, vpre2 = soft_cuba(dense_drive(s1, weights.w2), 1)
    s3, vpre3 = soft_cuba(dense_drive(s2, weights.w3), 2)
    return (s0, s1, state1, s2, vpre2, s3, vpre3), tuple(out_masks)


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def like(cls, arrays) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays],
                   [np.zeros_like(a) for a in arrays])


def adam_step(arrays, grads, state: AdamState, cfg: TrainConfig) -> None:
    """In-place Adam update of float64 weight arrays."""
    state.step += 1
    b1c = 1.0 - cfg.beta1 ** state.step
    b2c = 1.0 - cfg.beta2 ** state.step
    for w, g, m, v in zip(arrays, grads, state.m, state.v):
        m += (1.0 - cfg.beta1) * (g - m)
        v += (1.0 - cfg.beta2) * (g * g - v)
        w -= cfg.learning_rate * (m / b1c) / (np.sqrt(v / b2c) + cfg.epsilon)


def stack_rasters(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """(B, n_channels, T) spike stack and label vector from a dataset."""
    rasters = [t.raster for t in dataset.trials]
    if any(r is None for r in rasters):
        raise InvalidInputError("dataset has trials without rasters; encode first")
    shapes = {r.spikes.shape for r in rasters}
    if len(shapes) != 1:
        raise InvalidInputError(f"rasters differ in shape: {sorted(shapes)}")
    return (np.stack([r.spikes for r in rasters]),
            np.asarray(dataset.labels()))


@dataclass
class TrainResult:
    weights: NetworkWeights
    final_weights: NetworkWeights
    params: NetworkParams
    config: TrainConfig
    history: list
    best_epoch: int


def train(dataset: Dataset, params: NetworkParams, cfg: TrainConfig,
          log=None) -> TrainResult:
    """Train on a dataset of encoded trials (see train_arrays)."""
    if dataset.n_classes != params.n_out:
        raise InvalidInputError(
            f"dataset has {dataset.n_classes} classes but network outputs "
            f"{params.n_out}")
    x, y = stack_rasters(dataset)
    return train_arrays(x, y, params, cfg, log=log)


def train_arrays(x: np.ndarray, y: np.ndarray, params: NetworkParams,
                 cfg: TrainConfig, log=None) -> TrainResult:
    """Train on a (B, n_in, T) spike stack with integer labels.

    A stratified val_fraction subset is held out to pick the best epoch
    by validation accuracy (ties favor the earlier epoch); with
    val_fraction = 0 the final weights are returned. history holds one
    dict per epoch with loss, accuracies, and throughput.
    """
    y = np.asarray(y)
    if len(x) != len(y) or len(y) == 0:
        raise InvalidInputError("need equally many trials and labels, >= 1")
    if y.min() < 0 or y.max() >= params.n_out:
        raise InvalidInputError(
            f"labels must lie in [0, {params.n_out}), got "
            f"[{y.min()}, {y.max()}]")
    _tune_allocator()
    val_x = val_y = None
    if cfg.val_fraction > 0:
        fit_idx, val_idx = stratified_split_indices(
            y, 1.0 - cfg.val_fraction, cfg.seed)
        if len(val_idx) and len(fit_idx):
            val_x, val_y = x[val_idx], y[val_idx]
            x, y = x[fit_idx], y[fit_idx]
    n = len(y)

    weights = init_weights(params, cfg.seed)
    arrays = weights.arrays()
    opt = AdamState.like(arrays)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    history = []
    best = (-1.0, 0, weights.copy())
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        hits = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads, preds = batch_gradients(
                weights, params, x[idx], y[idx], cfg)
            if not np.isfinite(loss):
                raise NumericalBlowupError(
                    f"non-finite loss at epoch {epoch}; lower the learning rate")
            adam_step(arrays, grads.arrays(), opt, cfg)
            epoch_loss += loss * len(idx)
            hits += int((preds == y[idx]).sum())
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise NumericalBlowupError(
                f"non-finite weights after epoch {epoch}; lower the learning rate")
        entry = {
            "epoch": epoch,
            "loss": epoch_loss / n,
            "train_acc": hits / n,
            "seconds": time.perf_counter() - t0,
        }
        entry["trials_per_s"] = n / entry["seconds"]
        if val_x is not None:
            val_preds, _ = decide(forward(weights, params, val_x,
                                          dtype=cfg.np_dtype))
            entry["val_acc"] = float((val_preds == val_y).mean())
            if entry["val_acc"] > best[0]:
                best = (entry["val_acc"], epoch, weights.copy())
        history.append(entry)
        if log is not None:
            log(entry)
    if val_x is None:
        best = (float("nan"), cfg.epochs - 1, weights.copy())
    return TrainResult(best[2], weights, params, cfg, history, best[1])
