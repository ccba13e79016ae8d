"""Learning-rate schedules and the on/off switch for the distillation term."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

LR_KINDS = ("cosine", "linear")
DISTILL_KINDS = ("always", "first_fraction", "every_k")


def _floor_fraction(fraction: float, total: int) -> int:
    # rounding first keeps 0.29 * 100 at 29 instead of 28.999999999999996 -> 28
    return math.floor(round(fraction * total, 9))


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup from zero, then cosine annealing or linear decay.

    ``total_steps`` is the length of the run the schedule belongs to, so a
    shortened run decays fully by its own last step.
    """

    kind: str = "cosine"
    base_lr: float = 0.1
    warmup_fraction: float = 0.0
    total_steps: int = 1000
    min_lr: float = 0.0

    def __post_init__(self):
        if self.kind not in LR_KINDS:
            raise DomainError(f"lr schedule kind must be one of {LR_KINDS}, got {self.kind!r}")
        if not self.base_lr > 0:
            raise DomainError(f"base_lr must be positive, got {self.base_lr}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise DomainError(f"warmup_fraction must lie in [0, 1), got {self.warmup_fraction}")
        if self.total_steps <= 0:
            raise DomainError(f"total_steps must be positive, got {self.total_steps}")
        if self.min_lr < 0:
            raise DomainError(f"min_lr must be non-negative, got {self.min_lr}")
        if self.warmup_fraction > 0 and self.warmup_steps < 1:
            raise DomainError(
                f"warmup_fraction {self.warmup_fraction} rounds to zero steps over {self.total_steps}")

    @property
    def warmup_steps(self) -> int:
        return _floor_fraction(self.warmup_fraction, self.total_steps)

    def with_total_steps(self, total_steps: int) -> "LrSchedule":
        return LrSchedule(self.kind, self.base_lr, self.warmup_fraction, total_steps, self.min_lr)

    def with_base_lr(self, base_lr: float) -> "LrSchedule":
        return LrSchedule(self.kind, base_lr, self.warmup_fraction, self.total_steps, self.min_lr)

    def warmup_lr(self, step: int) -> float:
        return self.base_lr * step / self.warmup_steps

    def decay_lr(self, step: int) -> float:
        span = self.total_steps - 1 - self.warmup_steps
        progress = 1.0 if span <= 0 else min(max((step - self.warmup_steps) / span, 0.0), 1.0)
        if self.kind == "cosine":
            return self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + math.cos(math.pi * progress))
        return self.base_lr * (1.0 - progress)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "base_lr": self.base_lr, "warmup_fraction": self.warmup_fraction,
                "total_steps": self.total_steps, "min_lr": self.min_lr}

    @classmethod
    def from_dict(cls, d: dict) -> "LrSchedule":
        return cls(kind=str(d.get("kind", "cosine")).lower(),
                   base_lr=float(d.get("base_lr", 0.1)),
                   warmup_fraction=float(d.get("warmup_fraction", 0.0)),
                   total_steps=int(d.get("total_steps", 1000)),
                   min_lr=float(d.get("min_lr", 0.0)))


def lr_at(sched: LrSchedule, step: int) -> float:
    if not 0 <= step < sched.total_steps:
        raise DomainError(f"step {step} outside [0, {sched.total_steps})")
    if step < sched.warmup_steps:
        return sched.warmup_lr(step)
    if step == sched.warmup_steps and sched.warmup_steps > 0:
        return sched.base_lr
    return sched.decay_lr(step)


@dataclass(frozen=True)
class DistillSchedule:
    kind: str = "always"
    rho: float = 1.0
    k: int = 1
    total_steps: int | None = None

    def __post_init__(self):
        if self.kind not in DISTILL_KINDS:
            raise DomainError(f"distill schedule kind must be one of {DISTILL_KINDS}, got {self.kind!r}")
        if self.kind == "first_fraction" and not 0.0 < self.rho <= 1.0:
            raise DomainError(f"rho must lie in (0, 1], got {self.rho}")
        if self.kind == "every_k" and self.k < 1:
            raise DomainError(f"k must be at least 1, got {self.k}")
        if self.total_steps is not None and self.total_steps <= 0:
            raise DomainError(f"total_steps must be positive, got {self.total_steps}")

    @classmethod
    def always(cls, total_steps: int | None = None) -> "DistillSchedule":
        return cls("always", total_steps=total_steps)

    @classmethod
    def first_fraction(cls, rho: float, total_steps: int | None = None) -> "DistillSchedule":
        return cls("first_fraction", rho=rho, total_steps=total_steps)

    @classmethod
    def every_k(cls, k: int, total_steps: int | None = None) -> "DistillSchedule":
        return cls("every_k", k=k, total_steps=total_steps)

    def with_total_steps(self, total_steps: int) -> "DistillSchedule":
        return DistillSchedule(self.kind, self.rho, self.k, total_steps)

    def active_steps(self, total_steps: int | None = None) -> int:
        """Closed-form number of steps with the distillation term switched on."""
        total = self._total(total_steps)
        if self.kind == "always":
            return total
        if self.kind == "first_fraction":
            return _floor_fraction(self.rho, total)
        return -(-total // self.k)

    def _total(self, total_steps: int | None) -> int:
        total = total_steps if total_steps is not None else self.total_steps
        if total is None:
            raise DomainError("distill schedule has no total_steps")
        return total

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "first_fraction":
            d["rho"] = self.rho
        if self.kind == "every_k":
            d["k"] = self.k
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DistillSchedule":
        return cls(kind=str(d.get("kind", "always")).lower(),
                   rho=float(d.get("rho", 1.0)),
                   k=int(d.get("k", 1)),
                   total_steps=d.get("total_steps"))


def distill_active(sched: DistillSchedule, step: int, total_steps: int | None = None) -> bool:
    total = sched._total(total_steps)
    if not 0 <= step < total:
        raise DomainError(f"step {step} outside [0, {total})")
    if sched.kind == "always":
        return True
    if sched.kind == "first_fraction":
        return step < _floor_fraction(sched.rho, total)
    return step % sched.k == 0
