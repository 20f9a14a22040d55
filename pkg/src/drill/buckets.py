"""Discretisation of a continuous label range into buckets.

A regression target is represented as a probability distribution over a
uniform grid of bucket values.  A distribution decodes to a score through its
expectation, and a scalar label maps back onto the grid via the nearest
bucket value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BucketSpec",
    "BucketDistribution",
    "make_buckets",
    "softmax",
    "expectation",
    "expectation_batch",
    "target_bucket",
    "target_buckets",
    "normalized_std",
    "normalized_std_batch",
]


@dataclass(frozen=True)
class BucketSpec:
    """Uniform bucket grid with ``values[i] = label_min + i * capacity``."""

    count: int
    capacity: float
    values: np.ndarray
    label_min: float

    @property
    def label_max(self) -> float:
        return float(self.values[-1])

    def unit_positions(self) -> np.ndarray:
        """Bucket values rescaled to the unit interval."""
        span = self.values[-1] - self.values[0]
        return (self.values - self.values[0]) / span


@dataclass(frozen=True)
class BucketDistribution:
    """A probability vector over buckets, optionally with its raw logits."""

    probs: np.ndarray
    logits: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a nonempty 1-D vector")
        if not np.all(np.isfinite(probs)) or np.any(probs < -1e-12):
            raise ValueError("probs must be finite and nonnegative")
        if abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError("probs must sum to 1")
        if self.logits is not None:
            logits = np.asarray(self.logits, dtype=float)
            object.__setattr__(self, "logits", logits)
            if logits.shape != probs.shape:
                raise ValueError("logits and probs must have the same length")

    @classmethod
    def from_logits(cls, logits) -> "BucketDistribution":
        logits = np.asarray(logits, dtype=float)
        return cls(probs=softmax(logits), logits=logits)

    def __len__(self) -> int:
        return self.probs.shape[0]


def make_buckets(label_min: float, label_max: float, count: int) -> BucketSpec:
    """Build ``count`` evenly spaced bucket values spanning [label_min, label_max].

    The grid includes both endpoints, so a decoded expectation can reach every
    value in the label range.
    """
    label_min = float(label_min)
    label_max = float(label_max)
    if not (np.isfinite(label_min) and np.isfinite(label_max)):
        raise ValueError("bucket bounds must be finite")
    if not label_max > label_min:
        raise ValueError(f"label_max must exceed label_min, got [{label_min}, {label_max}]")
    if int(count) != count or count < 2:
        raise ValueError(f"count must be an integer >= 2, got {count!r}")
    count = int(count)
    values = np.linspace(label_min, label_max, count)
    capacity = (label_max - label_min) / (count - 1)
    return BucketSpec(count=count, capacity=capacity, values=values, label_min=label_min)


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax over the last axis (max-subtraction form)."""
    z = np.asarray(logits, dtype=float)
    if z.size == 0:
        raise ValueError("softmax of empty input")
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax input must be finite")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def expectation(dist: BucketDistribution, spec: BucketSpec) -> float:
    """Decode a distribution to a score: its mean bucket value.

    The result is clipped to the bucket range so it is always a valid score
    even in the presence of float rounding.
    """
    if len(dist) != spec.count:
        raise ValueError(f"distribution has {len(dist)} entries for {spec.count} buckets")
    return float(expectation_batch(dist.probs[None, :], spec)[0])


def expectation_batch(probs: np.ndarray, spec: BucketSpec) -> np.ndarray:
    """Row-wise expectation decode of an (n, count) probability matrix."""
    if probs.shape[-1] != spec.count:
        raise ValueError(f"probability rows have {probs.shape[-1]} entries for {spec.count} buckets")
    return np.clip(probs @ spec.values, spec.values[0], spec.values[-1])


def target_bucket(label: float, spec: BucketSpec) -> int:
    """Index of the bucket value nearest ``label``.

    Out-of-range labels are clipped to the bucket range first; exact midpoints
    resolve to the lower index.
    """
    if not np.isfinite(label):
        raise ValueError("label must be finite")
    return int(target_buckets(np.asarray([label], dtype=float), spec)[0])


def target_buckets(labels, spec: BucketSpec) -> np.ndarray:
    labels = np.asarray(labels, dtype=float)
    if not np.all(np.isfinite(labels)):
        raise ValueError("labels must be finite")
    clipped = np.clip(labels, spec.values[0], spec.values[-1])
    # argmin returns the first minimiser, which is the lower-index tie-break
    return np.abs(clipped[:, None] - spec.values[None, :]).argmin(axis=1)


def normalized_std(dist: BucketDistribution, spec: BucketSpec) -> float:
    """Standard deviation of a distribution over bucket positions rescaled to [0, 1].

    Rescaling bounds the result by 0.5 for any label range, which keeps
    ``1 - std`` usable as an attenuation factor.
    """
    if len(dist) != spec.count:
        raise ValueError(f"distribution has {len(dist)} entries for {spec.count} buckets")
    return float(normalized_std_batch(dist.probs[None, :], spec)[0])


def normalized_std_batch(probs: np.ndarray, spec: BucketSpec) -> np.ndarray:
    u = spec.unit_positions()
    mean = probs @ u
    var = ((u[None, :] - mean[:, None]) ** 2 * probs).sum(axis=-1)
    return np.sqrt(np.maximum(var, 0.0))
