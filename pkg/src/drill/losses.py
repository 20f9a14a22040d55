"""Losses: MAE on decoded scores, KL divergence, and decoupled alignment.

The decoupled alignment loss splits a bucket distribution at a target bucket
into a binary target-vs-rest part and a renormalised non-target part, matches
each part between teacher and student with KL divergence, and attenuates the
non-target term with a gate computed from the teacher's spread:

    loss = KL(p_bin_teacher, p_bin_student)
         + beta * KL(q_nontarget_teacher, q_nontarget_student) * r

where ``r = max(1 - normalized_std(teacher), 0)``.  Analytic gradients with
respect to the student (and optionally teacher) logits are provided for the
training loop; gradients always flow through the softmax Jacobian, so every
helper here takes probability rows and returns logit gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .buckets import BucketDistribution, BucketSpec, normalized_std_batch

EPS = 1e-12

__all__ = [
    "DdaBreakdown",
    "mae_loss",
    "kl_divergence",
    "dda_loss",
    "logit_alignment_loss",
    "mae_expectation_grad",
    "kl_full_grad",
    "dda_batch",
    "dda_student_logit_grad",
    "dda_teacher_logit_grad",
]


@dataclass(frozen=True)
class DdaBreakdown:
    """Value of the decoupled alignment loss and its pieces."""

    target_kl: float
    nontarget_kl: float
    r_factor: float
    beta: float

    @property
    def total(self) -> float:
        return self.target_kl + self.beta * self.nontarget_kl * self.r_factor


def mae_loss(predictions, targets) -> float:
    """Mean absolute error."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.ndim != 1 or p.shape != t.shape:
        raise ValueError("predictions and targets must be 1-D with equal length")
    if p.size == 0:
        raise ValueError("mae_loss of empty input")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise ValueError("inputs must be finite")
    return float(np.mean(np.abs(p - t)))


def _check_distribution(x: np.ndarray, name: str) -> None:
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-D vector")
    if not np.all(np.isfinite(x)) or np.any(x < -1e-12):
        raise ValueError(f"{name} must be finite and nonnegative")
    if abs(float(x.sum()) - 1.0) > 1e-6:
        raise ValueError(f"{name} must sum to 1 within 1e-6, got {x.sum()!r}")


def _kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL(p || q) with zero-mass terms dropped and eps-floored logs.

    Clamped at zero: KL is nonnegative, but near-identical rows can round to
    a tiny negative sum.
    """
    logs = np.log(np.maximum(p, EPS)) - np.log(np.maximum(q, EPS))
    return np.maximum(np.where(p > 0.0, p * logs, 0.0).sum(axis=-1), 0.0)


def kl_divergence(p, q) -> float:
    """KL(p || q) in nats; ``0 * log(0/q)`` terms contribute zero."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    _check_distribution(p, "p")
    _check_distribution(q, "q")
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} vs {q.shape[0]}")
    return float(_kl_rows(p[None, :], q[None, :])[0])


def logit_alignment_loss(teacher_score: float, student_score: float) -> float:
    """Absolute difference of two decoded scores."""
    if not (np.isfinite(teacher_score) and np.isfinite(student_score)):
        raise ValueError("scores must be finite")
    return float(abs(teacher_score - student_score))


def dda_loss(
    teacher: BucketDistribution,
    student: BucketDistribution,
    target: int,
    beta: float,
    spec: BucketSpec,
) -> DdaBreakdown:
    """Decoupled alignment of one teacher/student distribution pair.

    ``target`` is the 0-based index of the target bucket.  The teacher is
    treated as a constant here; gradient helpers live alongside this function.
    When either side has all its mass on the target bucket the non-target part
    is empty and its KL term is defined as zero.
    """
    if len(teacher) != spec.count or len(student) != spec.count:
        raise ValueError("teacher, student and spec must share the bucket count")
    if int(target) != target or not 0 <= target < spec.count:
        raise ValueError(f"target index {target!r} outside [0, {spec.count - 1}]")
    if not np.isfinite(beta) or beta < 0:
        raise ValueError("beta must be finite and nonnegative")
    tk, ntk, r = dda_batch(
        teacher.probs[None, :], student.probs[None, :], np.asarray([int(target)]), spec
    )
    return DdaBreakdown(float(tk[0]), float(ntk[0]), float(r[0]), float(beta))


def dda_batch(
    teacher_probs: np.ndarray,
    student_probs: np.ndarray,
    targets: np.ndarray,
    spec: BucketSpec,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row (target_kl, nontarget_kl, r_factor) for batched distributions."""
    T, S, t = teacher_probs, student_probs, targets
    n = np.arange(T.shape[0])
    pt_t = T[n, t]
    pt_s = S[n, t]
    rest_t = 1.0 - pt_t
    rest_s = 1.0 - pt_s

    bin_t = np.stack([pt_t, rest_t], axis=1)
    bin_s = np.stack([pt_s, rest_s], axis=1)
    target_kl = _kl_rows(np.maximum(bin_t, 0.0), np.maximum(bin_s, 0.0))

    Tn = T.copy()
    Sn = S.copy()
    Tn[n, t] = 0.0
    Sn[n, t] = 0.0
    qt = Tn / np.maximum(rest_t, EPS)[:, None]
    qs = Sn / np.maximum(rest_s, EPS)[:, None]
    empty = (rest_t <= EPS) | (rest_s <= EPS)
    nontarget_kl = np.where(empty, 0.0, _kl_rows(qt, qs))

    r = np.maximum(1.0 - normalized_std_batch(T, spec), 0.0)
    return target_kl, nontarget_kl, r


def mae_expectation_grad(
    probs: np.ndarray, values: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean |decoded - target| over a batch and its gradient at the logits.

    Returns ``(loss, decoded_scores, dloss_dlogits)``.  The decode is
    ``score = probs @ values`` and the softmax Jacobian gives
    ``dscore/dlogit_j = p_j * (values_j - score)``.
    """
    scores = probs @ values
    resid = scores - targets
    loss = float(np.mean(np.abs(resid)))
    n = probs.shape[0]
    dz = np.sign(resid)[:, None] * probs * (values[None, :] - scores[:, None]) / n
    return loss, scores, dz


def kl_full_grad(
    teacher_probs: np.ndarray, student_probs: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean KL(teacher || student) over a batch and its student-logit gradient."""
    n = teacher_probs.shape[0]
    loss = float(_kl_rows(teacher_probs, student_probs).mean())
    dz = (student_probs - teacher_probs) / n
    return loss, dz


def dda_student_logit_grad(
    teacher_probs: np.ndarray,
    student_probs: np.ndarray,
    targets: np.ndarray,
    beta: float,
    spec: BucketSpec,
    r_factor: np.ndarray | None = None,
) -> np.ndarray:
    """Gradient of the batch-mean decoupled alignment loss at the student logits.

    The teacher side (including the r gate) is a constant.  Derivation sketch,
    per sample with target t, student probs s and a = s_t:

        target part:     d/da  = -pt_t/a + (1 - pt_t)/(1 - a)
        non-target part: d/ds_i = -beta*r * q_t_i / s_i     (i != t)
                         d/da   = -beta*r / (1 - a)

    followed by the softmax Jacobian ``dz_j = s_j * (g_j - sum_i g_i s_i)``.
    """
    T, S, t = teacher_probs, student_probs, targets
    n = np.arange(T.shape[0])
    pt_t = T[n, t]
    a = S[n, t]
    rest_t = 1.0 - pt_t
    rest_s = np.maximum(1.0 - a, EPS)
    if r_factor is None:
        r_factor = np.maximum(1.0 - normalized_std_batch(T, spec), 0.0)

    Tn = T.copy()
    Tn[n, t] = 0.0
    qt = Tn / np.maximum(rest_t, EPS)[:, None]
    empty = (rest_t <= EPS) | (1.0 - a <= EPS)
    nt_scale = np.where(empty, 0.0, beta * r_factor)

    g = -nt_scale[:, None] * qt / np.maximum(S, EPS)
    g[n, t] = -pt_t / np.maximum(a, EPS) + rest_t / rest_s - nt_scale / rest_s
    gs = (g * S).sum(axis=1, keepdims=True)
    return S * (g - gs) / T.shape[0]


def dda_teacher_logit_grad(
    teacher_probs: np.ndarray,
    student_probs: np.ndarray,
    targets: np.ndarray,
    beta: float,
    spec: BucketSpec,
) -> np.ndarray:
    """Gradient of the batch-mean decoupled alignment loss at the teacher logits.

    Used only when the joint-training flag routes alignment gradients into the
    teacher.  Includes the dependence of the r gate on the teacher's spread;
    with sigma the rescaled std and u the unit bucket positions,
    ``dsigma/dp_i = (u_i - mean_u)^2 / (2 sigma)`` on the simplex.
    """
    T, S, t = teacher_probs, student_probs, targets
    nrows, L = T.shape
    n = np.arange(nrows)
    pt_t = T[n, t]
    a = S[n, t]
    rest_t = np.maximum(1.0 - pt_t, EPS)
    rest_s = np.maximum(1.0 - a, EPS)

    Tn = T.copy()
    Sn = S.copy()
    Tn[n, t] = 0.0
    Sn[n, t] = 0.0
    qt = Tn / rest_t[:, None]
    qs = Sn / rest_s[:, None]
    empty = (1.0 - pt_t <= EPS) | (1.0 - a <= EPS)
    nontarget_kl = np.where(empty, 0.0, _kl_rows(qt, qs))

    u = spec.unit_positions()
    mean_u = T @ u
    sigma = normalized_std_batch(T, spec)
    r = np.maximum(1.0 - sigma, 0.0)
    nt_scale = np.where(empty, 0.0, beta * r)

    # non-target KL part: d/de_j = [log(qt_j / qs_j) - nontarget_kl] / rest_t
    log_ratio = np.log(np.maximum(qt, EPS)) - np.log(np.maximum(qs, EPS))
    h = nt_scale[:, None] * (log_ratio - nontarget_kl[:, None]) / rest_t[:, None]
    h[n, t] = 0.0
    # binary target part: d/dpt = log(pt_t/a) - log((1-pt_t)/(1-a))
    h[n, t] = np.log(np.maximum(pt_t, EPS) / np.maximum(a, EPS)) - np.log(rest_t / rest_s)
    # r gate: d(beta * kl_nt * r)/dp_i = -beta * kl_nt * (u_i - mean_u)^2 / (2 sigma)
    gate_rows = (~empty) & (sigma > 1e-9) & (r > 0.0)
    du2 = (u[None, :] - mean_u[:, None]) ** 2
    h -= np.where(
        gate_rows[:, None],
        (beta * nontarget_kl / np.maximum(2.0 * sigma, EPS))[:, None] * du2,
        0.0,
    )
    hs = (h * T).sum(axis=1, keepdims=True)
    return T * (h - hs) / nrows
