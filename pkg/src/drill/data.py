"""Synthetic regression benchmarks, delimited-text IO, splits, and label hiding.

A dataset keeps every known label in ``labels`` (NaN where truly unknown) and
partitions rows into ``labeled_idx`` and ``unlabeled_idx``.  Labels of rows in
``unlabeled_idx`` may still be stored; they are hidden from training and exist
only so pseudo-label error can be diagnosed.  The trainer reads data through
the ``labeled_*``/``unlabeled_features`` accessors and never touches hidden
labels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "SsrDataset",
    "FeatureScaler",
    "DelimitedParseError",
    "SYNTHETIC_FAMILIES",
    "make_synthetic",
    "split_train_test",
    "select_labeled",
    "load_delimited",
    "save_delimited",
]


class DelimitedParseError(ValueError):
    """Raised for malformed delimited-text rows; message names the line."""


@dataclass(frozen=True)
class SsrDataset:
    features: np.ndarray
    labels: np.ndarray
    labeled_idx: np.ndarray
    unlabeled_idx: np.ndarray
    label_min: float
    label_max: float

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=float))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=float))
        object.__setattr__(self, "labeled_idx", np.asarray(self.labeled_idx, dtype=int))
        object.__setattr__(self, "unlabeled_idx", np.asarray(self.unlabeled_idx, dtype=int))
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must have one entry per row")
        both = np.intersect1d(self.labeled_idx, self.unlabeled_idx)
        if both.size:
            raise ValueError(f"indices {both[:5]} are both labeled and unlabeled")
        if self.labeled_idx.size and not np.all(np.isfinite(self.labels[self.labeled_idx])):
            raise ValueError("every labeled index must have a finite label")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def labeled_features(self) -> np.ndarray:
        return self.features[self.labeled_idx]

    def labeled_labels(self) -> np.ndarray:
        return self.labels[self.labeled_idx]

    def unlabeled_features(self) -> np.ndarray:
        return self.features[self.unlabeled_idx]

    def hidden_unlabeled_labels(self) -> np.ndarray:
        """True labels of unlabeled rows, for diagnostics only (NaN if unknown)."""
        return self.labels[self.unlabeled_idx]


def _label_bounds(labels: np.ndarray) -> tuple[float, float]:
    known = labels[np.isfinite(labels)]
    if known.size == 0:
        return float("nan"), float("nan")
    return float(known.min()), float(known.max())


def _all_labeled(features: np.ndarray, labels: np.ndarray) -> SsrDataset:
    lo, hi = _label_bounds(labels)
    return SsrDataset(
        features=features,
        labels=labels,
        labeled_idx=np.arange(features.shape[0]),
        unlabeled_idx=np.empty(0, dtype=int),
        label_min=lo,
        label_max=hi,
    )


def _sine(x: np.ndarray) -> np.ndarray:
    return 2.5 + 1.5 * np.sin(2.0 * np.pi * x[:, 0])


def _piecewise(x: np.ndarray) -> np.ndarray:
    # a step in the first coordinate plus a ramp in the second
    return 1.0 + 2.0 * (x[:, 0] >= 0.5) + 1.5 * x[:, 1]


def _friedman(x: np.ndarray) -> np.ndarray:
    return (
        10.0 * np.sin(np.pi * x[:, 0] * x[:, 1])
        + 20.0 * (x[:, 2] - 0.5) ** 2
        + 10.0 * x[:, 3]
        + 5.0 * x[:, 4]
    )


SYNTHETIC_FAMILIES = {
    "sine": (_sine, 8),
    "piecewise": (_piecewise, 6),
    "friedman": (_friedman, 10),
}


def make_synthetic(family: str, n_total: int, noise_std: float, seed: int) -> SsrDataset:
    """Draw features uniformly on the unit cube and label them per ``family``.

    Families: "sine" (one relevant of 8 coordinates), "piecewise" (step plus
    ramp in the first two of 6), "friedman" (the classic 5-relevant-of-10
    nonlinear benchmark).
    """
    if family not in SYNTHETIC_FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {sorted(SYNTHETIC_FAMILIES)}")
    if n_total <= 0:
        raise ValueError(f"n_total must be positive, got {n_total}")
    if noise_std < 0:
        raise ValueError(f"noise_std must be nonnegative, got {noise_std}")
    fn, dim = SYNTHETIC_FAMILIES[family]
    rng = np.random.default_rng(seed)
    features = rng.uniform(0.0, 1.0, size=(n_total, dim))
    labels = fn(features) + noise_std * rng.standard_normal(n_total)
    return _all_labeled(features, labels)


def split_train_test(data: SsrDataset, n_test: int, seed: int) -> tuple[SsrDataset, SsrDataset]:
    """Split off ``n_test`` labeled rows as a test set; the rest stay training rows."""
    if n_test <= 0 or n_test >= data.labeled_idx.size:
        raise ValueError(f"n_test must be in [1, {data.labeled_idx.size - 1}], got {n_test}")
    rng = np.random.default_rng(seed)
    pool = rng.permutation(data.labeled_idx)
    test_rows = np.sort(pool[:n_test])
    train_rows = np.setdiff1d(np.arange(data.n), test_rows)
    test = _all_labeled(data.features[test_rows], data.labels[test_rows])
    train_labeled = np.setdiff1d(train_rows, data.unlabeled_idx)
    train = SsrDataset(
        features=data.features[train_rows],
        labels=data.labels[train_rows],
        labeled_idx=np.searchsorted(train_rows, train_labeled),
        unlabeled_idx=np.searchsorted(train_rows, np.intersect1d(train_rows, data.unlabeled_idx)),
        label_min=_label_bounds(data.labels[train_rows])[0],
        label_max=_label_bounds(data.labels[train_rows])[1],
    )
    return train, test


def select_labeled(data: SsrDataset, n_labeled: int, seed: int) -> SsrDataset:
    """Keep ``n_labeled`` uniformly chosen rows labeled and hide the rest.

    Hidden labels are retained in ``labels`` so pseudo-label quality can be
    diagnosed later, but the rows move to ``unlabeled_idx``.
    """
    if n_labeled <= 0:
        raise ValueError(f"n_labeled must be positive, got {n_labeled}")
    if n_labeled > data.labeled_idx.size:
        raise ValueError(
            f"n_labeled={n_labeled} exceeds the {data.labeled_idx.size} labeled rows available"
        )
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(data.labeled_idx, size=n_labeled, replace=False))
    rest = np.setdiff1d(np.arange(data.n), chosen)
    return replace(data, labeled_idx=chosen, unlabeled_idx=rest)


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature standardisation fitted on training features."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaler":
        features = np.asarray(features, dtype=float)
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        # constant features pass through unscaled
        std = np.where(std < 1e-12, 1.0, std)
        return cls(mean=mean, std=std)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=float) - self.mean) / self.std

    def apply(self, data: SsrDataset) -> SsrDataset:
        return replace(data, features=self.transform(data.features))


def load_delimited(path, label_column="label", delimiter: str = ",") -> SsrDataset:
    """Parse numeric rows with one label column; empty label cells mark unlabeled rows.

    The header row is optional and detected by non-numeric cells.  A string
    ``label_column`` requires a header; an integer indexes columns directly.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    rows = [row for row in rows if row]
    if not rows:
        raise ValueError(f"{path}: empty file")

    def numeric(cell: str) -> bool:
        try:
            float(cell)
            return True
        except ValueError:
            return False

    has_header = any(cell.strip() and not numeric(cell) for cell in rows[0])
    header = [cell.strip() for cell in rows[0]] if has_header else None
    body_start = 1 if has_header else 0
    ncols = len(rows[0])
    if ncols < 2:
        raise ValueError(f"{path}: need at least one feature column and a label column")

    if isinstance(label_column, str):
        if header is None:
            raise ValueError(f"{path}: label_column {label_column!r} needs a header row")
        if label_column not in header:
            raise ValueError(f"{path}: no column named {label_column!r} in header {header}")
        label_pos = header.index(label_column)
    else:
        label_pos = int(label_column)
        if not -ncols <= label_pos < ncols:
            raise ValueError(f"{path}: label column index {label_pos} out of range")
        label_pos %= ncols

    feats, labels = [], []
    for line_no, row in enumerate(rows[body_start:], start=body_start + 1):
        if len(row) != ncols:
            raise DelimitedParseError(
                f"{path}: line {line_no}: expected {ncols} fields, got {len(row)}"
            )
        feat_row = []
        for j, cell in enumerate(row):
            cell = cell.strip()
            if j == label_pos:
                if cell == "":
                    labels.append(np.nan)
                elif numeric(cell):
                    labels.append(float(cell))
                else:
                    raise DelimitedParseError(
                        f"{path}: line {line_no}: non-numeric label {cell!r}"
                    )
            elif numeric(cell):
                feat_row.append(float(cell))
            else:
                raise DelimitedParseError(
                    f"{path}: line {line_no}: non-numeric value {cell!r} in column {j}"
                )
        feats.append(feat_row)
    if not feats:
        raise ValueError(f"{path}: no data rows")

    features = np.asarray(feats, dtype=float)
    label_arr = np.asarray(labels, dtype=float)
    known = np.isfinite(label_arr)
    lo, hi = _label_bounds(label_arr)
    return SsrDataset(
        features=features,
        labels=label_arr,
        labeled_idx=np.flatnonzero(known),
        unlabeled_idx=np.flatnonzero(~known),
        label_min=lo,
        label_max=hi,
    )


def save_delimited(data: SsrDataset, path, delimiter: str = ",") -> None:
    """Write a dataset as delimited text; unlabeled rows get an empty label cell.

    Floats are written with ``repr`` so a load round-trips them exactly.
    Hidden labels of unlabeled rows stay hidden.
    """
    unlabeled = set(data.unlabeled_idx.tolist())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow([f"f{j}" for j in range(data.dim)] + ["label"])
        for i in range(data.n):
            cells = [repr(float(v)) for v in data.features[i]]
            cells.append("" if i in unlabeled else repr(float(data.labels[i])))
            writer.writerow(cells)
