"""Distilling an ensemble into one student, optionally over extra unlabeled inputs."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .mlp import MlpModel, TrainConfig, fit, pad_output_grad
from .predictions import log_softmax, softmax

UNLABELED = -1


@dataclass
class DistillConfig:
    lambda_cls: float = 0.5
    distill_temperature: float = 2.0
    unsup_ratio: float = 0.25
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.lambda_cls < 0 or not self.distill_temperature > 0 or self.unsup_ratio < 0:
            raise ValueError("invalid distillation config")

    def to_dict(self) -> dict:
        return asdict(self)


def soften(probs: np.ndarray, temperature: float) -> np.ndarray:
    """Raise probabilities to 1/T and renormalize rows."""
    q = np.power(np.asarray(probs, dtype=np.float64), 1.0 / temperature)
    return q / q.sum(axis=1, keepdims=True)


def distill_loss_and_grad(student_logits, teacher_probs, labels, lambda_cls: float,
                          temperature: float) -> tuple[float, np.ndarray]:
    """Mean over rows of soft-target cross-entropy plus weighted hard-label CE.

    Rows with label -1 (or ``labels=None``) contribute only the soft term.
    """
    z = np.asarray(student_logits, dtype=np.float64)
    teacher_probs = np.asarray(teacher_probs, dtype=np.float64)
    if z.shape != teacher_probs.shape:
        raise ValueError(f"shape mismatch: student {z.shape} vs teacher {teacher_probs.shape}")
    n = len(z)
    q = soften(teacher_probs, temperature)
    logp_t = log_softmax(z / temperature)
    per_row = -(q * logp_t).sum(axis=1)
    grad = (np.exp(logp_t) - q) / temperature
    if labels is not None and lambda_cls > 0:
        labels = np.asarray(labels, dtype=np.int64)
        rows = np.flatnonzero(labels != UNLABELED)
        if len(rows):
            logp = log_softmax(z[rows])
            per_row[rows] += -lambda_cls * logp[np.arange(len(rows)), labels[rows]]
            g = np.exp(logp)
            g[np.arange(len(rows)), labels[rows]] -= 1.0
            grad[rows] += lambda_cls * g
    return float(per_row.mean()), grad / n


def distill_loss(student_logits, teacher_probs, labels, config: DistillConfig) -> float:
    return distill_loss_and_grad(student_logits, teacher_probs, labels, config.lambda_cls,
                                 config.distill_temperature)[0]


def soft_nll(student_logits, teacher_probs) -> float:
    """Cross-entropy of student probabilities against teacher targets (T = 1)."""
    return float(-(np.asarray(teacher_probs) * log_softmax(np.asarray(student_logits))).sum(axis=1).mean())


Teacher = Callable[[np.ndarray], np.ndarray]


def _run(student: MlpModel, teacher: Teacher, inputs, labels, x_val, config: DistillConfig,
         epoch_rows=None):
    C = student.config.class_count
    targets = np.asarray(teacher(inputs), dtype=np.float64)
    val_targets = np.asarray(teacher(x_val), dtype=np.float64)

    def loss_fn(out, rows):
        loss, d = distill_loss_and_grad(out[:, :C], targets[rows], labels[rows], config.lambda_cls,
                                        config.distill_temperature)
        return loss, pad_output_grad(d, out)

    log = fit(student, inputs, loss_fn, lambda m: soft_nll(m.logits(x_val), val_targets), config.train,
              epoch_rows=epoch_rows)
    return log


def train_distilled(student: MlpModel, teacher: Teacher, x, y, x_val, config: DistillConfig):
    """Fit ``student`` to the frozen teacher's soft targets on the labeled set.

    The teacher is scored once per input before training starts. Returns the
    training log; validation score is the student's cross-entropy against the
    teacher's validation targets.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty training set")
    return _run(student, teacher, x, y, np.asarray(x_val, dtype=np.float64), config)


def unsup_sample_size(n_train: int, ratio: float) -> int:
    return int(round(ratio * n_train))


def train_g_distilled(student: MlpModel, teacher: Teacher, x, y, unsup_x, x_val, config: DistillConfig,
                      unsup_labels=None):
    """Distillation whose soft-target term also covers unlabeled inputs.

    Each epoch a fresh subsample of ``round(unsup_ratio * len(x))`` unlabeled
    rows (drawn from a stream separate from batch shuffling) joins the labeled
    rows. Unlabeled rows never enter the classification term.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    unsup_x = np.asarray(unsup_x, dtype=np.float64).reshape(-1, x.shape[1])
    if unsup_labels is not None and np.any(np.asarray(unsup_labels) != UNLABELED):
        raise ValueError("unsupervised rows must be unlabeled")
    n = len(x)
    if n == 0:
        raise ValueError("empty training set")
    k = unsup_sample_size(n, config.unsup_ratio)
    if k == 0:
        return _run(student, teacher, x, y, np.asarray(x_val, dtype=np.float64), config)
    if len(unsup_x) == 0:
        raise ValueError("no unsupervised inputs to sample from")
    inputs = np.concatenate([x, unsup_x])
    labels = np.concatenate([y, np.full(len(unsup_x), UNLABELED)])
    g_rng = np.random.default_rng([config.train.seed, 11])

    def epoch_rows(epoch):
        pick = g_rng.choice(len(unsup_x), size=k, replace=k > len(unsup_x))
        return np.concatenate([np.arange(n), n + np.sort(pick)])

    return _run(student, teacher, inputs, labels, np.asarray(x_val, dtype=np.float64), config, epoch_rows)
