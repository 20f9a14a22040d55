"""Small feedforward network with manual reverse-mode gradients.

Hidden layers are rectified linear, the output layer is linear.  The output is
interpreted either as bucket logits (``head="distribution"``) or as a raw
score (``head="scalar"``, used by the direct-regression baseline).  A forward
pass caches its activations on the model, so gradients for a batch must be
requested before the next forward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .buckets import BucketDistribution, BucketSpec, make_buckets, softmax

__all__ = [
    "MlpModel",
    "GradientTape",
    "OptimizerState",
    "TrainingDivergenceError",
    "CheckpointFormatError",
    "Checkpoint",
    "init_mlp",
    "forward",
    "sgd_step",
    "save_checkpoint",
    "load_checkpoint",
]

HEADS = ("distribution", "scalar")


class TrainingDivergenceError(RuntimeError):
    """Raised when a training step produces non-finite values."""


class CheckpointFormatError(ValueError):
    """Raised when a checkpoint file does not match the documented layout."""


@dataclass
class GradientTape:
    """Per-parameter gradients mirroring a model's weight and bias shapes."""

    w_grads: list[np.ndarray]
    b_grads: list[np.ndarray]

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.w_grads, self.b_grads):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)


@dataclass
class MlpModel:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: str = "distribution"
    _cache: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.layer_dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.head,
        )

    def params_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_params_flat(self, flat: np.ndarray) -> None:
        k = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = flat[k : k + w.size].reshape(w.shape)
            k += w.size
            b[...] = flat[k : k + b.size]
            k += b.size
        if k != flat.size:
            raise ValueError("flat parameter vector has the wrong length")

    def forward_batch(self, inputs: np.ndarray) -> np.ndarray:
        """Run the network on an (n, input_dim) batch and return the (n, output_dim) logits."""
        X = np.asarray(inputs, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(f"expected inputs of shape (n, {self.input_dim}), got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("inputs must be finite")
        acts = [X]
        pre = []
        h = X
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0) if k < last else z
            acts.append(h)
        self._cache = (acts, pre)
        return pre[-1]

    def backward(self, dlogits: np.ndarray) -> GradientTape:
        """Backpropagate a gradient at the output logits through the cached forward pass."""
        if self._cache is None:
            raise RuntimeError("backward requires a preceding forward pass")
        acts, pre = self._cache
        dz = np.asarray(dlogits, dtype=float)
        if dz.shape != pre[-1].shape:
            raise ValueError(f"expected logit gradient of shape {pre[-1].shape}, got {dz.shape}")
        n_layers = len(self.weights)
        w_grads: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
        b_grads: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
        for k in reversed(range(n_layers)):
            w_grads[k] = acts[k].T @ dz
            b_grads[k] = dz.sum(axis=0)
            if k > 0:
                dz = (dz @ self.weights[k].T) * (pre[k - 1] > 0.0)
        return GradientTape(w_grads, b_grads)


def init_mlp(layer_dims, rng: np.random.Generator, head: str = "distribution") -> MlpModel:
    """Initialise weights uniformly in [-s, s] with s = sqrt(6 / (fan_in + fan_out))."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ValueError(f"layer_dims must list at least input and output sizes, got {dims}")
    if head not in HEADS:
        raise ValueError(f"head must be one of {HEADS}, got {head!r}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        s = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases, head)


def forward(model: MlpModel, inputs) -> BucketDistribution:
    """Run one feature vector through a distribution-head model."""
    if model.head != "distribution":
        raise ValueError("forward returns a bucket distribution; model has a scalar head")
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D feature vector, got shape {x.shape}")
    logits = model.forward_batch(x[None, :])[0]
    return BucketDistribution(probs=softmax(logits), logits=logits)


@dataclass
class OptimizerState:
    """Momentum SGD state; velocity buffers are created lazily to match the model."""

    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocity_w: list[np.ndarray] | None = None
    velocity_b: list[np.ndarray] | None = None


def sgd_step(model: MlpModel, tape: GradientTape, state: OptimizerState) -> None:
    """In-place update: v <- momentum*v + g + weight_decay*theta; theta <- theta - lr*v."""
    if len(tape.w_grads) != len(model.weights):
        raise ValueError("gradient tape does not match the model")
    if state.velocity_w is None:
        state.velocity_w = [np.zeros_like(w) for w in model.weights]
        state.velocity_b = [np.zeros_like(b) for b in model.biases]
    for g in tape.w_grads + tape.b_grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError("non-finite gradient in sgd_step")
    lr, mom, wd = state.learning_rate, state.momentum, state.weight_decay
    for w, gw, vw in zip(model.weights, tape.w_grads, state.velocity_w):
        if gw.shape != w.shape:
            raise ValueError("gradient shape does not match the parameter shape")
        vw *= mom
        vw += gw + wd * w
        w -= lr * vw
    for b, gb, vb in zip(model.biases, tape.b_grads, state.velocity_b):
        vb *= mom
        vb += gb + wd * b
        b -= lr * vb


# ---------------------------------------------------------------------------
# Checkpoint serialisation.
#
# Flat little-endian binary layout (documented in the README):
#   bytes 0..7   header b"DRLCKPT" + one version byte (currently 0x31, "1")
#   int64        K, the number of layer dimensions
#   int64 * K    layer_dims
#   int64        head kind: 0 scalar, 1 distribution
#   float64 * 2  label_min, label_max of the bucket grid (NaN for scalar heads)
#   float64 * d  per-feature mean used to standardise inputs (d = layer_dims[0])
#   float64 * d  per-feature std
#   per layer:   weight matrix row-major (dims[l] * dims[l+1] float64), then
#                bias vector (dims[l+1] float64)
# ---------------------------------------------------------------------------

CHECKPOINT_HEADER = b"DRLCKPT1"


@dataclass
class Checkpoint:
    """A model plus the input scaling and bucket range needed for inference."""

    model: MlpModel
    label_min: float
    label_max: float
    feature_mean: np.ndarray
    feature_std: np.ndarray

    def bucket_spec(self) -> BucketSpec | None:
        if self.model.head != "distribution":
            return None
        return make_buckets(self.label_min, self.label_max, self.model.output_dim)


def save_checkpoint(
    path,
    model: MlpModel,
    label_min: float = math.nan,
    label_max: float = math.nan,
    feature_mean: np.ndarray | None = None,
    feature_std: np.ndarray | None = None,
) -> None:
    d = model.input_dim
    mean = np.zeros(d) if feature_mean is None else np.asarray(feature_mean, dtype=float)
    std = np.ones(d) if feature_std is None else np.asarray(feature_std, dtype=float)
    if mean.shape != (d,) or std.shape != (d,):
        raise ValueError("feature_mean and feature_std must have length layer_dims[0]")
    parts = [CHECKPOINT_HEADER]
    dims = np.asarray((len(model.layer_dims),) + model.layer_dims, dtype="<i8")
    parts.append(dims.tobytes())
    parts.append(np.asarray([1 if model.head == "distribution" else 0], dtype="<i8").tobytes())
    parts.append(np.asarray([label_min, label_max], dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(mean, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(std, dtype="<f8").tobytes())
    for w, b in zip(model.weights, model.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:7] != CHECKPOINT_HEADER[:7]:
        raise CheckpointFormatError(f"{path}: not a model checkpoint")
    if blob[7:8] != CHECKPOINT_HEADER[7:8]:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {blob[7:8]!r}")

    pos = 8

    def take(count: int, dtype: str) -> np.ndarray:
        nonlocal pos
        nbytes = count * np.dtype(dtype).itemsize
        if pos + nbytes > len(blob):
            raise CheckpointFormatError(f"{path}: truncated checkpoint")
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=pos)
        pos += nbytes
        return arr

    (k,) = take(1, "<i8")
    if k < 2 or k > 64:
        raise CheckpointFormatError(f"{path}: implausible layer count {k}")
    dims = tuple(int(v) for v in take(int(k), "<i8"))
    if any(d <= 0 for d in dims):
        raise CheckpointFormatError(f"{path}: invalid layer dims {dims}")
    (head_kind,) = take(1, "<i8")
    if head_kind not in (0, 1):
        raise CheckpointFormatError(f"{path}: invalid head kind {head_kind}")
    label_min, label_max = take(2, "<f8")
    mean = take(dims[0], "<f8").copy()
    std = take(dims[0], "<f8").copy()
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(take(fan_in * fan_out, "<f8").reshape(fan_in, fan_out).copy())
        biases.append(take(fan_out, "<f8").copy())
    if pos != len(blob):
        raise CheckpointFormatError(f"{path}: {len(blob) - pos} trailing bytes")
    model = MlpModel(dims, weights, biases, "distribution" if head_kind == 1 else "scalar")
    return Checkpoint(model, float(label_min), float(label_max), mean, std)
