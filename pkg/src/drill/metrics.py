"""Evaluation metrics: MAE, coefficient of determination, Spearman correlation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .buckets import BucketSpec
from .data import SsrDataset
from .losses import mae_loss
from .net import MlpModel
from .trainer import predict_batch

__all__ = ["UndefinedMetricError", "MetricReport", "r_squared", "srcc", "evaluate"]


class UndefinedMetricError(ValueError):
    """Raised when a metric is undefined for the given inputs (e.g. constant targets)."""


@dataclass(frozen=True)
class MetricReport:
    mae: float
    r2: float
    srcc: float
    n: int


def _check_pair(predictions, targets) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.ndim != 1 or p.shape != t.shape:
        raise ValueError("predictions and targets must be 1-D with equal length")
    if p.size < 2:
        raise ValueError("need at least two samples")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise ValueError("inputs must be finite")
    return p, t


def r_squared(predictions, targets) -> float:
    """1 - residual sum of squares / total sum of squares."""
    p, t = _check_pair(predictions, targets)
    total = float(np.sum((t.mean() - t) ** 2))
    if total == 0.0:
        raise UndefinedMetricError("r_squared is undefined for constant targets")
    residual = float(np.sum((p - t) ** 2))
    return 1.0 - residual / total


def srcc(predictions, targets) -> float:
    """Spearman rank correlation: Pearson correlation of average-tie ranks."""
    p, t = _check_pair(predictions, targets)
    if np.all(p == p[0]):
        raise UndefinedMetricError("srcc is undefined for constant predictions")
    if np.all(t == t[0]):
        raise UndefinedMetricError("srcc is undefined for constant targets")
    rp = rankdata(p, method="average")
    rt = rankdata(t, method="average")
    rp -= rp.mean()
    rt -= rt.mean()
    denom = np.sqrt(float(np.mean(rp**2)) * float(np.mean(rt**2)))
    return float(np.mean(rp * rt) / denom)


def evaluate(student: MlpModel, spec: BucketSpec | None, test: SsrDataset) -> MetricReport:
    """Score every labeled test row (no augmentation) and aggregate all metrics."""
    if test.labeled_idx.size == 0:
        raise ValueError("test set has no labeled rows")
    features = test.labeled_features()
    labels = test.labeled_labels()
    preds = predict_batch(student, spec, features)
    return MetricReport(
        mae=mae_loss(preds, labels),
        r2=r_squared(preds, labels),
        srcc=srcc(preds, labels),
        n=int(labels.size),
    )
