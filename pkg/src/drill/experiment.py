"""Experiment orchestration: data preparation, runs, sweeps, and file outputs.

A run directory contains:
  results.csv      one row per (variant, seed): metrics plus wall time
  summary.csv      per-variant mean and std of each metric
  losses_*.csv     per-iteration loss records for each run
  *.ckpt           final student (and teacher, when present) checkpoints
  manifest.json    the fully resolved experiment spec, for exact reproduction

All result files are deterministic for a fixed spec; only the wall_seconds
column varies between repeats.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .buckets import expectation, make_buckets
from .data import (
    FeatureScaler,
    SsrDataset,
    SYNTHETIC_FAMILIES,
    load_delimited,
    make_synthetic,
    select_labeled,
    split_train_test,
)
from .metrics import MetricReport, evaluate
from .net import forward, load_checkpoint, save_checkpoint
from .trainer import VARIANTS, TrainConfig, TrainedPair, train_drill

__all__ = [
    "DatasetSpec",
    "ExperimentSpec",
    "RunResult",
    "prepare_data",
    "run_single",
    "run_experiment",
    "sweep_labeled",
    "sweep_beta",
    "sweep_buckets",
    "run_ablation",
    "dump_distribution",
    "evaluate_checkpoint",
]

RESULT_FIELDS = ("variant", "seed", "mae", "r2", "srcc", "wall_seconds")
SUMMARY_FIELDS = ("variant", "n", "mae_mean", "mae_std", "r2_mean", "r2_std", "srcc_mean", "srcc_std")
ABLATION_VARIANTS = ("DRILL", "DRILL_KL", "DRILL_LOGITS", "SDE", "DR")


@dataclass
class DatasetSpec:
    """Either a synthetic family or a delimited-text file."""

    family: str | None = "sine"
    path: str | None = None
    label_column: str | int = "label"
    delimiter: str = ","
    n_train: int = 2050
    n_test: int = 1000
    noise_std: float = 0.3
    data_seed: int = 0
    test_fraction: float = 0.2

    def validate(self) -> None:
        if (self.family is None) == (self.path is None):
            raise ValueError("dataset: exactly one of family or path must be set")
        if self.family is not None and self.family not in SYNTHETIC_FAMILIES:
            raise ValueError(
                f"dataset.family: unknown family {self.family!r}; choose from {sorted(SYNTHETIC_FAMILIES)}"
            )
        if self.family is not None:
            if self.n_train < 1:
                raise ValueError(f"dataset.n_train: must be positive, got {self.n_train}")
            if self.n_test < 1:
                raise ValueError(f"dataset.n_test: must be positive, got {self.n_test}")
            if self.noise_std < 0:
                raise ValueError(f"dataset.noise_std: must be nonnegative, got {self.noise_std}")
        if self.path is not None and not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"dataset.test_fraction: must be in (0, 1), got {self.test_fraction}")


@dataclass
class ExperimentSpec:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_labeled: int | None = 50
    variants: list[str] = field(default_factory=lambda: ["DRILL"])
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = "runs/experiment"

    def validate(self) -> None:
        self.dataset.validate()
        if not self.variants:
            raise ValueError("variants: at least one variant is required")
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"variants: unknown variant {v!r}; choose from {VARIANTS}")
        if not self.seeds:
            raise ValueError("seeds: at least one seed is required")
        if self.n_labeled is not None and self.n_labeled < 1:
            raise ValueError(f"n_labeled: must be positive, got {self.n_labeled}")
        try:
            self.train.validate()
        except ValueError as exc:
            raise ValueError(f"train: {exc}") from exc


@dataclass
class RunResult:
    variant: str
    seed: int
    report: MetricReport
    wall_seconds: float
    pair: TrainedPair
    scaler: FeatureScaler


def prepare_data(
    ds: DatasetSpec, n_labeled: int | None, selection_seed: int
) -> tuple[SsrDataset, SsrDataset, FeatureScaler]:
    """Build standardized train and test sets plus the fitted scaler.

    The scaler is fitted on all training features (labeled and unlabeled) and
    applied to both splits.  The labeled subset is re-drawn per selection seed
    so repeated runs sample the labeled-data lottery independently.
    """
    if ds.path is not None:
        base = load_delimited(ds.path, label_column=ds.label_column, delimiter=ds.delimiter)
        n_test = max(1, int(round(ds.test_fraction * base.labeled_idx.size)))
        train, test = split_train_test(base, n_test, seed=ds.data_seed)
    else:
        full = make_synthetic(ds.family, ds.n_train + ds.n_test, ds.noise_std, ds.data_seed)
        train, test = split_train_test(full, ds.n_test, seed=ds.data_seed)
    if n_labeled is not None:
        train = select_labeled(train, n_labeled, seed=selection_seed)
    scaler = FeatureScaler.fit(train.features)
    return scaler.apply(train), scaler.apply(test), scaler


def run_single(spec: ExperimentSpec, variant: str, seed: int) -> RunResult:
    start = time.perf_counter()
    train, test, scaler = prepare_data(spec.dataset, spec.n_labeled, seed)
    cfg = replace(spec.train, variant=variant, seed=seed)
    pair = train_drill(train, cfg)
    report = evaluate(pair.student, pair.spec, test)
    wall = time.perf_counter() - start
    return RunResult(variant, seed, report, wall, pair, scaler)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_csv(path: Path, fields, rows) -> None:
    lines = [",".join(fields)]
    for row in rows:
        lines.append(",".join(_fmt(row[f]) for f in fields))
    _write_atomic(path, "\n".join(lines) + "\n")


def _summarize(rows: list[dict]) -> list[dict]:
    out = []
    for variant in dict.fromkeys(r["variant"] for r in rows):
        vals = {m: np.array([r[m] for r in rows if r["variant"] == variant]) for m in ("mae", "r2", "srcc")}
        out.append(
            {
                "variant": variant,
                "n": int(vals["mae"].size),
                "mae_mean": float(vals["mae"].mean()),
                "mae_std": float(vals["mae"].std()),
                "r2_mean": float(vals["r2"].mean()),
                "r2_std": float(vals["r2"].std()),
                "srcc_mean": float(vals["srcc"].mean()),
                "srcc_std": float(vals["srcc"].std()),
            }
        )
    return out


def _write_losses(path: Path, history) -> None:
    fields = ("iteration", "loss_t", "loss_s", "dda_target", "dda_nontarget", "dda_r", "dda_total", "total")
    rows = [dataclasses.asdict(rec) for rec in history]
    _write_csv(path, fields, rows)


def _save_pair(out: Path, result: RunResult) -> None:
    pair, scaler = result.pair, result.scaler
    if pair.spec is not None:
        lo, hi = float(pair.spec.values[0]), float(pair.spec.values[-1])
    else:
        lo = hi = float("nan")
    tag = f"{result.variant}_s{result.seed}"
    save_checkpoint(out / f"student_{tag}.ckpt", pair.student, lo, hi, scaler.mean, scaler.std)
    if pair.teacher is not None:
        save_checkpoint(out / f"teacher_{tag}.ckpt", pair.teacher, lo, hi, scaler.mean, scaler.std)


def _manifest(spec: ExperimentSpec) -> str:
    return json.dumps(dataclasses.asdict(spec), indent=2, sort_keys=True, default=str) + "\n"


def run_experiment(spec: ExperimentSpec) -> tuple[list[dict], list[dict]]:
    """Run every (variant, seed) pair and write result files under ``spec.out_dir``."""
    spec.validate()
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for variant in spec.variants:
        for seed in spec.seeds:
            result = run_single(spec, variant, seed)
            rows.append(
                {
                    "variant": variant,
                    "seed": seed,
                    "mae": result.report.mae,
                    "r2": result.report.r2,
                    "srcc": result.report.srcc,
                    "wall_seconds": result.wall_seconds,
                }
            )
            _write_losses(out / f"losses_{variant}_s{seed}.csv", result.pair.history)
            _save_pair(out, result)
    summaries = _summarize(rows)
    _write_csv(out / "results.csv", RESULT_FIELDS, rows)
    _write_csv(out / "summary.csv", SUMMARY_FIELDS, summaries)
    _write_atomic(out / "manifest.json", _manifest(spec))
    return rows, summaries


def _sweep(spec: ExperimentSpec, param: str, values, apply) -> list[dict]:
    """Run one experiment per value and aggregate per-value summaries."""
    spec.validate()
    root = Path(spec.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    collected = []
    for value in values:
        sub = apply(spec, value)
        name = f"{param}_{value:g}" if isinstance(value, float) else f"{param}_{value}"
        sub.out_dir = str(root / name)
        _, summaries = run_experiment(sub)
        for s in summaries:
            collected.append({param: value, **s})
    _write_csv(root / f"sweep_{param}.csv", (param, *SUMMARY_FIELDS), collected)
    return collected


def sweep_labeled(spec: ExperimentSpec, sizes: list[int]) -> list[dict]:
    def apply(base, n):
        sub = replace(base, n_labeled=int(n))
        sub.dataset = replace(base.dataset)
        sub.train = replace(base.train)
        return sub

    return _sweep(spec, "labeled", [int(v) for v in sizes], apply)


def sweep_beta(spec: ExperimentSpec, betas: list[float]) -> list[dict]:
    def apply(base, beta):
        sub = replace(base)
        sub.dataset = replace(base.dataset)
        sub.train = replace(base.train, beta=float(beta))
        return sub

    return _sweep(spec, "beta", [float(v) for v in betas], apply)


def sweep_buckets(spec: ExperimentSpec, counts: list[int]) -> list[dict]:
    def apply(base, count):
        sub = replace(base)
        sub.dataset = replace(base.dataset)
        sub.train = replace(base.train, bucket_count=int(count))
        return sub

    return _sweep(spec, "buckets", [int(v) for v in counts], apply)


def run_ablation(spec: ExperimentSpec) -> tuple[list[dict], list[dict]]:
    """Run the standard ablation variant set under one experiment spec."""
    sub = replace(spec, variants=list(ABLATION_VARIANTS))
    return run_experiment(sub)


def dump_distribution(checkpoint_path, raw_features) -> dict:
    """Bucket values, probabilities and decoded score for one raw input row."""
    bundle = load_checkpoint(checkpoint_path)
    if bundle.model.head != "distribution":
        raise ValueError("checkpoint holds a scalar-head model; no distribution to dump")
    spec = bundle.bucket_spec()
    x = np.asarray(raw_features, dtype=float)
    if x.shape != (bundle.model.input_dim,):
        raise ValueError(
            f"expected {bundle.model.input_dim} features, got {x.shape}"
        )
    z = (x - bundle.feature_mean) / bundle.feature_std
    dist = forward(bundle.model, z)
    return {
        "bucket_values": [float(v) for v in spec.values],
        "probs": [float(p) for p in dist.probs],
        "expectation": expectation(dist, spec),
    }


def evaluate_checkpoint(checkpoint_path, data_path, label_column="label", delimiter=",") -> MetricReport:
    """Evaluate a saved student on every labeled row of a delimited file."""
    bundle = load_checkpoint(checkpoint_path)
    data = load_delimited(data_path, label_column=label_column, delimiter=delimiter)
    scaler = FeatureScaler(bundle.feature_mean, bundle.feature_std)
    spec = bundle.bucket_spec()
    return evaluate(bundle.model, spec, scaler.apply(data))
