"""Joint teacher/student training with decoupled alignment, plus baselines.

Per iteration the full method samples a labeled and an unlabeled batch, feeds
weakly augmented inputs to the teacher and strongly augmented inputs to the
student, supervises the teacher on labeled data only, pseudo-labels the
unlabeled samples with the teacher's decoded scores (gradients severed), and
trains the student against ground truth plus pseudo-labels while aligning the
two bucket distributions with the decoupled loss.  Inference uses the student
alone.

Variants:
  DRILL                  full method
  DRILL_KL               alignment replaced by plain full-distribution KL
  DRILL_LOGITS           alignment replaced by |teacher score - student score|
  SDE                    single distribution-head branch, labeled data only
  DR                     single scalar-head branch, labeled data only
  MEAN_TEACHER_BASELINE  EMA teacher with a consistency MAE on decoded scores
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .augment import AugmentConfig, strong_augment, weak_augment
from .buckets import BucketSpec, make_buckets, softmax, target_buckets
from .data import SsrDataset
from .losses import (
    dda_batch,
    dda_student_logit_grad,
    dda_teacher_logit_grad,
    kl_full_grad,
    mae_expectation_grad,
)
from .net import MlpModel, OptimizerState, TrainingDivergenceError, init_mlp, sgd_step

__all__ = [
    "VARIANTS",
    "TrainConfig",
    "LossRecord",
    "StepInfo",
    "TrainedPair",
    "train_drill",
    "predict",
    "predict_batch",
    "pseudo_label",
]

VARIANTS = ("DRILL", "DR", "SDE", "DRILL_KL", "DRILL_LOGITS", "MEAN_TEACHER_BASELINE")


@dataclass
class TrainConfig:
    bucket_count: int = 200
    beta: float = 10.0
    labeled_batch: int = 8
    unlabeled_ratio: float = 7.0
    iterations: int = 2000
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    hidden_dims: tuple[int, ...] = (64, 64)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    variant: str = "DRILL"
    seed: int = 0
    # explicit (min, max) for the bucket grid; None derives it from the
    # labeled subset with a 5% margin per side
    label_range: tuple[float, float] | None = None
    # experiment flag: route alignment gradients into the teacher as well
    dda_to_teacher: bool = False
    ema_decay: float = 0.999

    @property
    def unlabeled_batch(self) -> int:
        return int(round(self.unlabeled_ratio * self.labeled_batch))

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.bucket_count < 2:
            raise ValueError(f"bucket_count must be at least 2, got {self.bucket_count}")
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ValueError(f"beta must be finite and nonnegative, got {self.beta}")
        if self.labeled_batch < 1:
            raise ValueError(f"labeled_batch must be positive, got {self.labeled_batch}")
        if self.unlabeled_ratio < 0:
            raise ValueError(f"unlabeled_ratio must be nonnegative, got {self.unlabeled_ratio}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be positive, got {self.iterations}")
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ValueError(f"learning_rate must be finite and nonnegative, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if not self.hidden_dims or any(int(h) <= 0 for h in self.hidden_dims):
            raise ValueError(f"hidden_dims must be positive, got {self.hidden_dims}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError(f"ema_decay must be in [0, 1), got {self.ema_decay}")
        if self.label_range is not None:
            lo, hi = self.label_range
            if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
                raise ValueError(f"label_range must be a finite (min, max) pair, got {self.label_range}")


@dataclass(frozen=True)
class LossRecord:
    iteration: int
    loss_t: float
    loss_s: float
    dda_target: float
    dda_nontarget: float
    dda_r: float
    dda_total: float
    total: float


@dataclass(frozen=True)
class StepInfo:
    """Per-iteration internals handed to an optional training callback."""

    iteration: int
    teacher_probs: np.ndarray | None
    student_probs: np.ndarray | None
    teacher_scores: np.ndarray | None
    student_scores: np.ndarray | None
    pseudo_labels: np.ndarray
    targets: np.ndarray
    dda_target_buckets: np.ndarray | None
    record: LossRecord


@dataclass
class TrainedPair:
    teacher: MlpModel | None
    student: MlpModel
    spec: BucketSpec | None
    history: list[LossRecord]


StepCallback = Callable[[StepInfo], None]


def _bucket_range(data: SsrDataset, cfg: TrainConfig) -> tuple[float, float]:
    if cfg.label_range is not None:
        return float(cfg.label_range[0]), float(cfg.label_range[1])
    labeled = data.labeled_labels()
    lo, hi = float(labeled.min()), float(labeled.max())
    width = hi - lo
    # degenerate labeled sets (a single distinct label) get a unit-ish span
    margin = 0.05 * width if width > 0 else 0.5
    return lo - margin, hi + margin


def _streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(5)
    names = ("init_teacher", "init_student", "batch", "teacher_aug", "student_aug")
    return {name: np.random.default_rng(ss) for name, ss in zip(names, children)}


def _check_finite(value: float, iteration: int) -> None:
    if not np.isfinite(value):
        raise TrainingDivergenceError(f"non-finite loss at iteration {iteration}")


def train_drill(
    data: SsrDataset, cfg: TrainConfig, step_callback: StepCallback | None = None
) -> TrainedPair:
    """Train the configured variant on ``data`` and return the models with history."""
    cfg.validate()
    if data.labeled_idx.size == 0:
        raise ValueError("training requires at least one labeled sample")
    if cfg.variant in ("DR", "SDE"):
        return _train_single(data, cfg, step_callback)
    if cfg.variant == "MEAN_TEACHER_BASELINE":
        return _train_mean_teacher(data, cfg, step_callback)
    return _train_joint(data, cfg, step_callback)


def _train_joint(data, cfg, step_callback) -> TrainedPair:
    rngs = _streams(cfg.seed)
    lo, hi = _bucket_range(data, cfg)
    spec = make_buckets(lo, hi, cfg.bucket_count)
    values = spec.values
    dims = (data.dim, *cfg.hidden_dims, cfg.bucket_count)
    teacher = init_mlp(dims, rngs["init_teacher"])
    student = init_mlp(dims, rngs["init_student"])
    opt_t = OptimizerState(cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    opt_s = OptimizerState(cfg.learning_rate, cfg.momentum, cfg.weight_decay)

    xl, yl = data.labeled_features(), data.labeled_labels()
    xu = data.unlabeled_features()
    n_l, n_u = xl.shape[0], xu.shape[0]
    b_l = cfg.labeled_batch
    b_u = cfg.unlabeled_batch if n_u > 0 else 0
    batch_rng = rngs["batch"]

    history: list[LossRecord] = []
    for it in range(cfg.iterations):
        li = batch_rng.integers(0, n_l, size=b_l)
        xb, yb = xl[li], yl[li]
        if b_u:
            ui = batch_rng.integers(0, n_u, size=b_u)
            x_raw = np.vstack([xb, xu[ui]])
        else:
            x_raw = xb

        x_weak = weak_augment(x_raw, cfg.augment, rngs["teacher_aug"])
        t_logits = teacher.forward_batch(x_weak)
        t_probs = softmax(t_logits)
        loss_t, _, dlog_t_lab = mae_expectation_grad(t_probs[:b_l], values, yb)
        dlog_t = np.zeros_like(t_logits)
        dlog_t[:b_l] = dlog_t_lab

        t_scores = np.clip(t_probs @ values, values[0], values[-1])
        pseudo = t_scores[b_l:]
        targets = np.concatenate([yb, pseudo])

        x_strong = strong_augment(x_raw, cfg.augment, rngs["student_aug"])
        s_logits = student.forward_batch(x_strong)
        s_probs = softmax(s_logits)
        loss_s, s_raw, dlog_s = mae_expectation_grad(s_probs, values, targets)

        t_idx = None
        dda_target = dda_nontarget = dda_r = 0.0
        if cfg.variant == "DRILL":
            t_idx = target_buckets(targets, spec)
            tk, ntk, r = dda_batch(t_probs, s_probs, t_idx, spec)
            dda_target = float(tk.mean())
            dda_nontarget = float(ntk.mean())
            dda_r = float(r.mean())
            loss_a = float((tk + cfg.beta * ntk * r).mean())
            dlog_s += dda_student_logit_grad(t_probs, s_probs, t_idx, cfg.beta, spec, r)
            if cfg.dda_to_teacher:
                dlog_t += dda_teacher_logit_grad(t_probs, s_probs, t_idx, cfg.beta, spec)
        elif cfg.variant == "DRILL_KL":
            loss_a, dz = kl_full_grad(t_probs, s_probs)
            dlog_s += dz
        else:  # DRILL_LOGITS: align the decoded scores
            loss_a, _, dz = mae_expectation_grad(s_probs, values, t_scores)
            dlog_s += dz

        total = loss_t + loss_s + loss_a
        _check_finite(total, it)

        tape_t = teacher.backward(dlog_t)
        tape_s = student.backward(dlog_s)
        sgd_step(teacher, tape_t, opt_t)
        sgd_step(student, tape_s, opt_s)

        record = LossRecord(it, loss_t, loss_s, dda_target, dda_nontarget, dda_r, loss_a, total)
        history.append(record)
        if step_callback is not None:
            step_callback(
                StepInfo(
                    iteration=it,
                    teacher_probs=t_probs,
                    student_probs=s_probs,
                    teacher_scores=t_scores,
                    student_scores=np.clip(s_raw, values[0], values[-1]),
                    pseudo_labels=pseudo,
                    targets=targets,
                    dda_target_buckets=t_idx,
                    record=record,
                )
            )
    return TrainedPair(teacher, student, spec, history)


def _train_single(data, cfg, step_callback) -> TrainedPair:
    """One supervised branch on labeled data: DR (scalar head) or SDE (buckets)."""
    rngs = _streams(cfg.seed)
    scalar = cfg.variant == "DR"
    if scalar:
        spec = None
        values = None
        dims = (data.dim, *cfg.hidden_dims, 1)
        model = init_mlp(dims, rngs["init_student"], head="scalar")
    else:
        lo, hi = _bucket_range(data, cfg)
        spec = make_buckets(lo, hi, cfg.bucket_count)
        values = spec.values
        dims = (data.dim, *cfg.hidden_dims, cfg.bucket_count)
        model = init_mlp(dims, rngs["init_student"])
    opt = OptimizerState(cfg.learning_rate, cfg.momentum, cfg.weight_decay)

    xl, yl = data.labeled_features(), data.labeled_labels()
    n_l = xl.shape[0]
    batch_rng = rngs["batch"]

    history: list[LossRecord] = []
    for it in range(cfg.iterations):
        li = batch_rng.integers(0, n_l, size=cfg.labeled_batch)
        # SDE keeps the weak view (it is the retained teacher branch); the
        # direct-regression baseline fits the raw labeled data
        x = xl[li] if scalar else weak_augment(xl[li], cfg.augment, rngs["teacher_aug"])
        yb = yl[li]
        logits = model.forward_batch(x)
        if scalar:
            scores = logits[:, 0]
            resid = scores - yb
            loss = float(np.mean(np.abs(resid)))
            dlog = np.zeros_like(logits)
            dlog[:, 0] = np.sign(resid) / cfg.labeled_batch
            probs = None
        else:
            probs = softmax(logits)
            loss, scores, dlog = mae_expectation_grad(probs, values, yb)
        _check_finite(loss, it)
        sgd_step(model, model.backward(dlog), opt)

        record = LossRecord(it, loss, loss, 0.0, 0.0, 0.0, 0.0, loss)
        history.append(record)
        if step_callback is not None:
            clipped = scores if scalar else np.clip(scores, values[0], values[-1])
            step_callback(
                StepInfo(
                    iteration=it,
                    teacher_probs=None,
                    student_probs=probs,
                    teacher_scores=None,
                    student_scores=clipped,
                    pseudo_labels=np.empty(0),
                    targets=yb,
                    dda_target_buckets=None,
                    record=record,
                )
            )
    return TrainedPair(None, model, spec, history)


def _train_mean_teacher(data, cfg, step_callback) -> TrainedPair:
    """EMA teacher over the student with a consistency MAE on decoded scores."""
    rngs = _streams(cfg.seed)
    lo, hi = _bucket_range(data, cfg)
    spec = make_buckets(lo, hi, cfg.bucket_count)
    values = spec.values
    dims = (data.dim, *cfg.hidden_dims, cfg.bucket_count)
    student = init_mlp(dims, rngs["init_student"])
    teacher = student.copy()
    opt = OptimizerState(cfg.learning_rate, cfg.momentum, cfg.weight_decay)

    xl, yl = data.labeled_features(), data.labeled_labels()
    xu = data.unlabeled_features()
    n_l, n_u = xl.shape[0], xu.shape[0]
    b_l = cfg.labeled_batch
    b_u = cfg.unlabeled_batch if n_u > 0 else 0
    batch_rng = rngs["batch"]

    history: list[LossRecord] = []
    for it in range(cfg.iterations):
        li = batch_rng.integers(0, n_l, size=b_l)
        xb, yb = xl[li], yl[li]
        if b_u:
            ui = batch_rng.integers(0, n_u, size=b_u)
            x_raw = np.vstack([xb, xu[ui]])
        else:
            x_raw = xb

        x_weak = weak_augment(x_raw, cfg.augment, rngs["teacher_aug"])
        t_probs = softmax(teacher.forward_batch(x_weak))
        t_scores = np.clip(t_probs @ values, values[0], values[-1])

        x_strong = strong_augment(x_raw, cfg.augment, rngs["student_aug"])
        s_probs = softmax(student.forward_batch(x_strong))
        sup, _, dlog_sup = mae_expectation_grad(s_probs[:b_l], values, yb)
        cons, s_raw, dlog_cons = mae_expectation_grad(s_probs, values, t_scores)
        dlog = dlog_cons
        dlog[:b_l] += dlog_sup
        loss_s = sup + cons
        loss_t = float(np.mean(np.abs(t_scores[:b_l] - yb)))
        _check_finite(loss_s, it)
        sgd_step(student, student.backward(dlog), opt)
        for tw, sw in zip(teacher.weights, student.weights):
            tw *= cfg.ema_decay
            tw += (1.0 - cfg.ema_decay) * sw
        for tb, sb in zip(teacher.biases, student.biases):
            tb *= cfg.ema_decay
            tb += (1.0 - cfg.ema_decay) * sb

        record = LossRecord(it, loss_t, loss_s, 0.0, 0.0, 0.0, cons, loss_s)
        history.append(record)
        if step_callback is not None:
            step_callback(
                StepInfo(
                    iteration=it,
                    teacher_probs=t_probs,
                    student_probs=s_probs,
                    teacher_scores=t_scores,
                    student_scores=np.clip(s_raw, values[0], values[-1]),
                    pseudo_labels=t_scores[b_l:],
                    targets=np.concatenate([yb, t_scores[b_l:]]),
                    dda_target_buckets=None,
                    record=record,
                )
            )
    return TrainedPair(teacher, student, spec, history)


def predict(model: MlpModel, spec: BucketSpec | None, inputs) -> float:
    """Decode one un-augmented feature vector to a score."""
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D feature vector, got shape {x.shape}")
    return float(predict_batch(model, spec, x[None, :])[0])


def predict_batch(model: MlpModel, spec: BucketSpec | None, inputs) -> np.ndarray:
    logits = model.forward_batch(np.asarray(inputs, dtype=float))
    if model.head == "scalar":
        return logits[:, 0].copy()
    if spec is None or spec.count != model.output_dim:
        raise ValueError("a bucket spec matching the model output width is required")
    probs = softmax(logits)
    return np.clip(probs @ spec.values, spec.values[0], spec.values[-1])


def pseudo_label(
    teacher: MlpModel,
    spec: BucketSpec,
    inputs,
    augment_cfg: AugmentConfig,
    rng: np.random.Generator,
) -> float:
    """Teacher's decoded score on the weakly augmented input.

    The result is a plain float: no gradient state is attached, so targets
    built from it never train the teacher.
    """
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D feature vector, got shape {x.shape}")
    return predict(teacher, spec, weak_augment(x, augment_cfg, rng))
