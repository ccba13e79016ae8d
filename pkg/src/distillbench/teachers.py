"""Frozen teacher registry, the ensembling strategies, and per-step cost metering."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .autodiff import Tensor
from .datasets import seed_stream
from .errors import ConfigError, ContractError, DomainError
from .fsutil import atomic_write_text
from .models import ModelParams, load_checkpoint, logits_numpy

STRATEGY_KINDS = ("single_best", "single_by_id", "greedy", "random_subset", "random_single")


@dataclass
class Teacher:
    id: str
    params: ModelParams
    reported_accuracy: float
    failed: bool = False
    hyperparameters: dict = field(default_factory=dict)


class TeacherPool:
    def __init__(self, teachers: list[Teacher], rng_seed: int = 0):
        if not teachers:
            raise ContractError("a teacher pool needs at least one teacher")
        ids = [t.id for t in teachers]
        if len(set(ids)) != len(ids):
            raise ContractError(f"teacher ids must be unique, got {ids}")
        spec = teachers[0].params.spec.with_seed(0)
        for t in teachers:
            if t.params.spec.with_seed(0) != spec:
                raise ContractError(f"teacher {t.id} has a different architecture")
            if not t.params.frozen:
                t.params = t.params.freeze()
        self.teachers = list(teachers)
        self.rng_seed = int(rng_seed)
        self._by_id = {t.id: t for t in teachers}

    def __len__(self) -> int:
        return len(self.teachers)

    def __getitem__(self, teacher_id: str) -> Teacher:
        try:
            return self._by_id[teacher_id]
        except KeyError:
            raise KeyError(f"unknown teacher id {teacher_id!r}") from None

    def __contains__(self, teacher_id: str) -> bool:
        return teacher_id in self._by_id

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.teachers]

    @property
    def spec(self):
        return self.teachers[0].params.spec


@dataclass(frozen=True)
class TeacherStrategy:
    kind: str = "single_best"
    k: int = 1
    teacher_id: str | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise DomainError(f"teacher strategy must be one of {STRATEGY_KINDS}, got {self.kind!r}")
        if self.kind in ("greedy", "random_subset") and self.k < 1:
            raise DomainError(f"{self.kind} needs k >= 1, got {self.k}")
        if self.kind == "single_by_id" and not self.teacher_id:
            raise DomainError("single_by_id needs a teacher_id")

    @classmethod
    def single_best(cls) -> "TeacherStrategy":
        return cls("single_best")

    @classmethod
    def single_by_id(cls, teacher_id: str) -> "TeacherStrategy":
        return cls("single_by_id", teacher_id=teacher_id)

    @classmethod
    def greedy(cls, k: int) -> "TeacherStrategy":
        return cls("greedy", k=k)

    @classmethod
    def random_subset(cls, k: int) -> "TeacherStrategy":
        return cls("random_subset", k=k)

    @classmethod
    def random_single(cls) -> "TeacherStrategy":
        return cls("random_single")

    def validate(self, pool: TeacherPool) -> None:
        if self.kind in ("greedy", "random_subset") and self.k > len(pool):
            raise DomainError(f"{self.kind}({self.k}) exceeds pool size {len(pool)}")
        if self.kind == "single_by_id" and self.teacher_id not in pool:
            raise KeyError(f"unknown teacher id {self.teacher_id!r}")

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind in ("greedy", "random_subset"):
            d["k"] = self.k
        if self.kind == "single_by_id":
            d["id"] = self.teacher_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TeacherStrategy":
        return cls(kind=str(d.get("kind", "single_best")).lower(), k=int(d.get("k", 1)),
                   teacher_id=d.get("id"))


class CostMeter:
    """Monotone work counters for one run; safe to bump from several threads."""

    def __init__(self):
        self.teacher_forwards = 0
        self.student_forwards = 0
        self.student_backwards = 0
        self.wall_clock_ns = 0
        self._lock = threading.Lock()

    def charge_teachers(self, n: int) -> None:
        with self._lock:
            self.teacher_forwards += n

    def charge_student(self, forwards: int = 1, backwards: int = 1) -> None:
        with self._lock:
            self.student_forwards += forwards
            self.student_backwards += backwards

    def add_wall(self, ns: int) -> None:
        with self._lock:
            self.wall_clock_ns += max(int(ns), 0)

    def cost_units(self, tau: float = 0.5) -> float:
        """One unit per student forward+backward, ``tau`` per teacher forward."""
        return float(self.student_backwards) + tau * self.teacher_forwards


def greedy_members(pool: TeacherPool, k: int) -> list[str]:
    """Top-k ids by reported accuracy (descending); ties go to the smaller id."""
    if not 1 <= k <= len(pool):
        raise DomainError(f"k must lie in [1, {len(pool)}], got {k}")
    ranked = sorted(pool.teachers, key=lambda t: (-t.reported_accuracy, t.id))
    return [t.id for t in ranked[:k]]


def select(strategy: TeacherStrategy, pool: TeacherPool, step: int, seed: int | None = None) -> list[str]:
    """Teacher ids used at ``step``; random kinds draw from a stream keyed by (seed, step)."""
    strategy.validate(pool)
    kind = strategy.kind
    if kind == "single_best":
        return greedy_members(pool, 1)
    if kind == "single_by_id":
        return [strategy.teacher_id]
    if kind == "greedy":
        return greedy_members(pool, strategy.k)
    rng = seed_stream(pool.rng_seed if seed is None else seed, step)
    ids = pool.ids
    if kind == "random_single":
        return [ids[int(rng.integers(len(ids)))]]
    picks = rng.choice(len(ids), size=strategy.k, replace=False)
    return [ids[int(i)] for i in picks]


def ensemble_logits(pool: TeacherPool, ids: list[str], x, meter: CostMeter | None = None) -> Tensor:
    """Mean raw logits of the selected teachers, summed in ascending id order."""
    if not ids:
        raise ContractError("ensemble_logits needs at least one teacher id")
    teachers = [pool[i] for i in sorted(ids)]
    feats = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    total = None
    with np.errstate(over="ignore", invalid="ignore"):
        for t in teachers:
            z = logits_numpy(t.params, feats)
            total = z if total is None else total + z
    if meter is not None:
        meter.charge_teachers(len(teachers))
    return Tensor(total / len(teachers))


def per_step_cost(strategy: TeacherStrategy, pool_size: int) -> int:
    """Teacher forwards charged on each step the distillation term is active."""
    if strategy.kind in ("greedy", "random_subset"):
        if strategy.k > pool_size:
            raise DomainError(f"{strategy.kind}({strategy.k}) exceeds pool size {pool_size}")
        return strategy.k
    return 1


# registry manifest ----------------------------------------------------------

REGISTRY_VERSION = 1


def registry_entries(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if doc.get("schema_version") != REGISTRY_VERSION:
        raise ConfigError(f"{path}: unsupported registry schema {doc.get('schema_version')!r}")
    return list(doc.get("teachers") or [])


def registry_text(entries: list[dict]) -> str:
    doc = {"schema_version": REGISTRY_VERSION, "teachers": entries}
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)


def write_registry(path: str | Path, entries: list[dict]) -> None:
    atomic_write_text(path, registry_text(entries))


def load_pool(manifest: str | Path, rng_seed: int = 0, seed: int | None = None) -> TeacherPool:
    """Build a pool from a registry manifest; ``seed`` filters entries by their sweep seed."""
    manifest = Path(manifest)
    teachers = []
    for e in registry_entries(manifest):
        if seed is not None and e.get("seed") != seed:
            continue
        params = load_checkpoint(manifest.parent / e["checkpoint"], frozen=True)
        teachers.append(Teacher(e["id"], params, float(e["reported_accuracy"]),
                                e.get("status") == "failed", dict(e.get("hyperparameters") or {})))
    if not teachers:
        raise ContractError(f"{manifest}: no teachers" + (f" for seed {seed}" if seed is not None else ""))
    return TeacherPool(teachers, rng_seed)
