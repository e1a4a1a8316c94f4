"""Spiking network definition: parameters, weights, inference, checkpoints.

Two architectures share one three-layer feedforward scaffold operating on
1 ms bins:

  * "hybrid": resonate-and-fire first layer with complex-valued input
    weights, then two current-based LIF layers.
  * "cuba": current-based LIF in all three layers (real weights only).

Every layer receives the previous layer's spikes with a uniform one-bin
delay, so each layer's drive at time t depends only on spikes at t - 1.
This keeps layers independent given their input spike trains: each layer
is a drive accumulation plus one temporal scan over the whole window.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidInputError

_CKPT_MAGIC = b"PSNW"
_CKPT_VERSION = 1
_ARCH_CODES = {"hybrid": 0, "cuba": 1}
_ARCH_NAMES = {v: k for k, v in _ARCH_CODES.items()}


@dataclass(frozen=True)
class RfParams:
    """Resonate-and-fire neuron: damped rotation in the complex plane.

    The state advances by z <- (1 - alpha) * exp(i * omega) * z + drive
    per 1 ms bin, where omega = 2*pi / period_ms. A spike fires when
    Im(z) >= threshold; reset zeroes the real part only.
    """

    threshold: float = 1.0
    period_ms: float = 10.0
    alpha: float = 0.02

    def __post_init__(self):
        if self.threshold <= 0 or self.period_ms <= 0 or not 0 < self.alpha < 1:
            raise InvalidInputError(f"invalid resonator parameters: {self}")

    @property
    def rotation(self) -> tuple[float, float]:
        """(real, imag) of the per-bin decay-rotation factor."""
        omega = 2.0 * np.pi / self.period_ms
        k = 1.0 - self.alpha
        return k * float(np.cos(omega)), k * float(np.sin(omega))


@dataclass(frozen=True)
class CubaParams:
    """Current-based LIF neuron.

    Per 1 ms bin: i <- (1 - alpha_i) * i + drive, v <- (1 - alpha_v) * v + i,
    spike when v >= threshold, reset v to 0 (the current is untouched).
    """

    threshold: float = 1.25
    alpha_i: float = 0.25
    alpha_v: float = 0.03

    def __post_init__(self):
        if (self.threshold <= 0 or not 0 < self.alpha_i < 1
                or not 0 < self.alpha_v < 1):
            raise InvalidInputError(f"invalid LIF parameters: {self}")


@dataclass(frozen=True)
class NetworkParams:
    arch: str = "hybrid"
    n_in: int = 8
    hidden: tuple[int, int] = (64, 64)
    n_out: int = 10
    rf: RfParams = field(default_factory=RfParams)
    cuba: CubaParams = field(default_factory=CubaParams)
    surrogate_width: float = 0.25

    def __post_init__(self):
        if self.arch not in _ARCH_CODES:
            raise InvalidInputError(f"arch must be one of {sorted(_ARCH_CODES)}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if len(self.hidden) != 2:
            raise InvalidInputError("hidden must have exactly 2 layer sizes")
        dims = (self.n_in, *self.hidden, self.n_out)
        if any(d < 1 for d in dims):
            raise InvalidInputError(f"layer sizes must be >= 1, got {dims}")
        if self.surrogate_width <= 0:
            raise InvalidInputError("surrogate_width must be positive")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.n_in, self.hidden[0], self.hidden[1], self.n_out)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkParams":
        d = dict(d)
        if "rf" in d:
            d["rf"] = RfParams(**d["rf"])
        if "cuba" in d:
            d["cuba"] = CubaParams(**d["cuba"])
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


@dataclass
class NetworkWeights:
    """Connection weights; w_in_im is None for the all-LIF architecture."""

    w_in_re: np.ndarray
    w_in_im: np.ndarray | None
    w2: np.ndarray
    w3: np.ndarray

    def copy(self) -> "NetworkWeights":
        return NetworkWeights(
            self.w_in_re.copy(),
            None if self.w_in_im is None else self.w_in_im.copy(),
            self.w2.copy(), self.w3.copy())

    def arrays(self) -> list[np.ndarray]:
        out = [self.w_in_re]
        if self.w_in_im is not None:
            out.append(self.w_in_im)
        out.extend([self.w2, self.w3])
        return out


def init_weights(params: NetworkParams, seed: int) -> NetworkWeights:
    """Uniform(-a, a) init with a = sqrt(6 / (fan_in + fan_out)) per layer.

    The resonator input weights (real and imaginary) are halved so the
    combined complex drive starts at a comparable magnitude. The stream
    is derived from (seed, 11) so it never collides with the plain-seed
    streams used for data synthesis.
    """
    rng = np.random.default_rng([seed, 11])
    n_in, h1, h2, n_out = params.dims

    def draw(fan_out, fan_in, scale=1.0):
        a = np.sqrt(6.0 / (fan_in + fan_out)) * scale
        return rng.uniform(-a, a, (fan_out, fan_in))

    if params.arch == "hybrid":
        w_in_re = draw(h1, n_in, 0.5)
        w_in_im = draw(h1, n_in, 0.5)
    else:
        w_in_re = draw(h1, n_in)
        w_in_im = None
    return NetworkWeights(w_in_re, w_in_im, draw(h2, h1), draw(n_out, h2))


def _wt(w: np.ndarray, dtype) -> np.ndarray:
    """Weight matrix transposed to (n_pre, n_post) in the working dtype."""
    return np.ascontiguousarray(w.T, dtype=dtype)


def delayed_drive(spikes: np.ndarray, w: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Drive x[t] = w @ s[t-1] for a time-major uint8 spike array (T, B, n_pre)."""
    T, B, _ = spikes.shape
    x = np.empty((T, B, w.shape[0]), dtype=dtype)
    x[0] = 0.0
    _kernels.spike_drive(spikes[:-1].reshape((T - 1) * B, -1), _wt(w, dtype),
                         x[1:].reshape((T - 1) * B, -1))
    return x


def _cuba_layer(s_prev, w, params: NetworkParams, dtype):
    T, B, _ = s_prev.shape
    H = w.shape[0]
    p = params.cuba
    dt = np.dtype(dtype).type
    x = delayed_drive(s_prev, w, dtype)
    v_pre, s = _kernels.cuba_forward(
        x.reshape(T, B * H), dt(1.0 - p.alpha_i), dt(1.0 - p.alpha_v),
        dt(p.threshold))
    return s.reshape(T, B, H), v_pre.reshape(T, B, H)


def forward(weights: NetworkWeights, params: NetworkParams,
            spikes_in: np.ndarray, dtype=np.float32,
            return_state: bool = False):
    """Run the network over a batch of input rasters.

    spikes_in: (B, n_in, T) 0/1 array (a stack of raster .spikes).
    Returns output spikes (T, B, n_out) as uint8, or with
    return_state=True the full tuple of per-layer spikes and pre-reset
    states needed by BPTT: (s0, s1, state1, s2, vpre2, s3, vpre3) where
    state1 is im_pre for the hybrid arch and v_pre for the all-LIF one.
    dtype sets the precision of the drives and stored states.
    """
    if spikes_in.ndim != 3 or spikes_in.shape[1] != params.n_in:
        raise InvalidInputError(
            f"spikes_in must be (batch, {params.n_in}, T), got {spikes_in.shape}")
    s0 = np.ascontiguousarray(
        spikes_in.transpose(2, 0, 1)).astype(np.uint8, copy=False)
    dt = np.dtype(dtype).type
    if params.arch == "hybrid":
        c1, c2 = params.rf.rotation
        state1, s1 = _kernels.rf_layer(
            s0, _wt(weights.w_in_re, dtype), _wt(weights.w_in_im, dtype),
            dt(c1), dt(c2), dt(params.rf.threshold))
    else:
        s1, state1 = _cuba_layer(s0, weights.w_in_re, params, dtype)
    s2, vpre2 = _cuba_layer(s1, weights.w2, params, dtype)
    s3, vpre3 = _cuba_layer(s2, weights.w3, params, dtype)
    if return_state:
        return s0, s1, state1, s2, vpre2, s3, vpre3
    return s3


def decide(out_spikes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class decisions from output spikes (T, B, n_out).

    Returns (predictions, no_spike_flags). The prediction is the class
    with the highest spike count; ties go to the lowest class index, and
    trials with no output spikes at all are flagged.
    """
    counts = out_spikes.sum(axis=0, dtype=np.int64)
    preds = counts.argmax(axis=1)
    return preds, counts.sum(axis=1) == 0


def decide_prefix(out_spikes: np.ndarray, bin_edges: np.ndarray) -> np.ndarray:
    """Predictions using only spikes before each edge (in bins).

    Returns an (n_edges, B) array of class decisions, ties to the lowest
    index, computed from cumulative counts c[e, b, k] over t < edge.
    """
    cum = np.cumsum(out_spikes, axis=0, dtype=np.int64)
    edges = np.asarray(bin_edges, dtype=int)
    if edges.min() < 1 or edges.max() > out_spikes.shape[0]:
        raise InvalidInputError("bin_edges must lie in [1, T]")
    return cum[edges - 1].argmax(axis=2)


def save_checkpoint(path: str, weights: NetworkWeights,
                    params: NetworkParams) -> None:
    """Write a binary checkpoint.

    Layout (little-endian): magic b'PSNW', uint32 version, uint32 arch
    code (0 hybrid, 1 all-LIF), uint32 dims n_in/h1/h2/n_out, 7 float64
    neuron parameters (rf threshold/period_ms/alpha, cuba threshold/
    alpha_i/alpha_v, surrogate width), then row-major float64 weights:
    input layer ((h1, n_in, 2) with real/imaginary interleaved for the
    hybrid arch, (h1, n_in) otherwise), w2 (h2, h1), w3 (n_out, h2).
    """
    head = _CKPT_MAGIC + struct.pack(
        "<6I7d", _CKPT_VERSION, _ARCH_CODES[params.arch], *params.dims,
        params.rf.threshold, params.rf.period_ms, params.rf.alpha,
        params.cuba.threshold, params.cuba.alpha_i, params.cuba.alpha_v,
        params.surrogate_width)
    with open(path, "wb") as f:
        f.write(head)
        if params.arch == "hybrid":
            inter = np.stack([weights.w_in_re, weights.w_in_im], axis=-1)
            f.write(np.ascontiguousarray(inter, dtype="<f8").tobytes())
        else:
            f.write(np.ascontiguousarray(weights.w_in_re, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(weights.w2, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(weights.w3, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[NetworkWeights, NetworkParams]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _CKPT_MAGIC:
        raise InvalidInputError(f"{path}: not a network checkpoint")
    header = struct.unpack_from("<6I7d", blob, 4)
    version, arch_code = header[0], header[1]
    if version != _CKPT_VERSION:
        raise InvalidInputError(f"{path}: unsupported checkpoint version {version}")
    if arch_code not in _ARCH_NAMES:
        raise InvalidInputError(f"{path}: unknown architecture code {arch_code}")
    n_in, h1, h2, n_out = header[2:6]
    rf_thr, rf_period, rf_alpha, cu_thr, cu_ai, cu_av, width = header[6:]
    params = NetworkParams(
        arch=_ARCH_NAMES[arch_code], n_in=n_in, hidden=(h1, h2), n_out=n_out,
        rf=RfParams(rf_thr, rf_period, rf_alpha),
        cuba=CubaParams(cu_thr, cu_ai, cu_av), surrogate_width=width)
    off = 4 + struct.calcsize("<6I7d")

    def take(shape):
        nonlocal off
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off)
        off += n * 8
        return arr.reshape(shape).astype(np.float64)

    if params.arch == "hybrid":
        inter = take((h1, n_in, 2))
        w_in_re, w_in_im = inter[..., 0].copy(), inter[..., 1].copy()
    else:
        w_in_re, w_in_im = take((h1, n_in)), None
    weights = NetworkWeights(w_in_re, w_in_im, take((h2, h1)), take((n_out, h2)))
    if off != len(blob):
        raise InvalidInputError(f"{path}: checkpoint size mismatch")
    return weights, params
