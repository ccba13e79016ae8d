"""Distillation loss algebra: hard-label cross-entropy, tempered KL, logit MSE."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, DomainError
from .schedules import DistillSchedule
from .teachers import TeacherStrategy

LOSS_KINDS = ("kl", "mse")


@dataclass(frozen=True)
class DistillConfig:
    lambda_kd: float = 1.0
    loss_kind: str = "kl"
    temperature: float = 1.0
    schedule: DistillSchedule = field(default_factory=DistillSchedule)
    teacher_strategy: TeacherStrategy = field(default_factory=TeacherStrategy)

    def __post_init__(self):
        if not self.lambda_kd >= 0.0:
            raise DomainError(f"lambda_kd must be non-negative, got {self.lambda_kd}")
        if self.loss_kind not in LOSS_KINDS:
            raise DomainError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if not self.temperature > 0.0:
            raise DomainError(f"temperature must be positive, got {self.temperature}")

    def to_dict(self) -> dict:
        return {
            "lambda_kd": self.lambda_kd,
            "loss_kind": self.loss_kind,
            "temperature": self.temperature,
            "schedule": self.schedule.to_dict(),
            "teacher": self.teacher_strategy.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DistillConfig":
        return cls(
            lambda_kd=float(d.get("lambda_kd", 1.0)),
            loss_kind=str(d.get("loss_kind", "kl")).lower(),
            temperature=float(d.get("temperature", 1.0)),
            schedule=DistillSchedule.from_dict(d.get("schedule") or {}),
            teacher_strategy=TeacherStrategy.from_dict(d.get("teacher") or {}),
        )


def _check_pair(student: Tensor, teacher: Tensor, op: str) -> None:
    if student.shape != teacher.shape or student.data.ndim != 2:
        raise DimensionError(f"{op}: student logits {student.shape} vs teacher logits {teacher.shape}")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood at temperature 1.

    ``labels`` is either an integer class per row or a [batch, classes]
    matrix of soft targets (mixup).
    """
    logits = ad.as_tensor(logits)
    log_probs = ad.log_softmax_rows(logits)
    labels = np.asarray(labels)
    if labels.ndim == 2:
        if labels.shape != logits.shape:
            raise DimensionError(f"cross_entropy: targets {labels.shape} vs logits {logits.shape}")
        return ad.scale(ad.sum(ad.mul(log_probs, labels)), -1.0 / logits.shape[0])
    return ad.scale(ad.mean(ad.pick(log_probs, labels)), -1.0)


def kl_distill(student_logits: Tensor, teacher_logits, temperature: float = 1.0) -> Tensor:
    """T^2 * mean over rows of KL(softmax(z_t/T) || softmax(z_s/T)).

    The teacher side is a constant: no gradient flows into it.
    """
    student_logits = ad.as_tensor(student_logits)
    teacher_logits = ad.as_tensor(teacher_logits)
    _check_pair(student_logits, teacher_logits, "kl_distill")
    if not temperature > 0.0:
        raise DomainError(f"kl_distill: temperature must be positive, got {temperature}")
    teacher_log_p = ad.log_softmax_rows(teacher_logits.detach(), temperature).data
    teacher_p = np.exp(teacher_log_p)
    student_log_q = ad.log_softmax_rows(student_logits, temperature)
    gap = ad.sub(Tensor(teacher_log_p), student_log_q)
    total = ad.sum(ad.mul(gap, teacher_p))
    return ad.scale(total, temperature**2 / student_logits.shape[0])


def mse_distill(student_logits: Tensor, teacher_logits) -> Tensor:
    """Mean over every entry of (z_s - z_t)^2 on raw logits."""
    student_logits = ad.as_tensor(student_logits)
    teacher_logits = ad.as_tensor(teacher_logits)
    _check_pair(student_logits, teacher_logits, "mse_distill")
    diff = ad.sub(student_logits, teacher_logits.detach())
    return ad.mean(ad.mul(diff, diff))


def distill_loss(kind: str, student_logits: Tensor, teacher_logits, temperature: float = 1.0) -> Tensor:
    if kind == "kl":
        return kl_distill(student_logits, teacher_logits, temperature)
    if kind == "mse":
        return mse_distill(student_logits, teacher_logits)
    raise DomainError(f"unknown distillation loss {kind!r}")


def composite(ce: Tensor, kd: Tensor | None, lambda_kd: float, distill_active: bool) -> Tensor:
    """lambda * kd + ce while distilling, plain ce otherwise."""
    if not distill_active or kd is None:
        return ce
    return ad.add(ad.scale(kd, lambda_kd), ce)
