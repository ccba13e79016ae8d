"""The student/teacher training loop, metric traces, and the teacher sweep."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .datasets import (DatasetSplit, GaussianMixtureSpec, batch_stream, generate, mixup_batch,
                       seed_stream)
from .errors import ContractError, DivergenceError, DomainError, NonFiniteError
from .fsutil import atomic_write_text, derive_seed
from .losses import DistillConfig, composite, cross_entropy, distill_loss
from .models import MlpSpec, ModelParams, accuracy, forward, init
from .optim import Optimizer, OptimizerConfig
from .schedules import LrSchedule, distill_active, lr_at
from .teachers import CostMeter, Teacher, TeacherPool, ensemble_logits, select

log = logging.getLogger(__name__)

# independent RNG domains hanging off a run seed
DATA_STREAM, TEACHER_STREAM, MIXUP_STREAM = 11, 12, 13

TRACE_HEADER = ("step", "wall_ns", "teacher_fwds", "cost_units", "train_loss", "ce", "kd", "val_acc", "lr")


@dataclass(frozen=True)
class DataConfig:
    """A Gaussian-mixture task plus split sizes; means are drawn from ``seed``."""

    num_classes: int = 10
    dim: int = 16
    separation: float = 1.0
    covariance_scale: float = 1.0
    label_noise: float = 0.0
    seed: int = 0
    n_train: int = 2000
    n_val: int = 2000

    def __post_init__(self):
        if self.n_train <= 0 or self.n_val <= 0:
            raise DomainError(f"split sizes must be positive, got n_train={self.n_train}, n_val={self.n_val}")
        self.mixture()  # validates classes, dim, noise and seed up front

    def mixture(self) -> GaussianMixtureSpec:
        return GaussianMixtureSpec.random(self.num_classes, self.dim, self.separation,
                                          covariance_scale=self.covariance_scale,
                                          label_noise=self.label_noise, seed=self.seed)

    def splits(self) -> tuple[DatasetSplit, DatasetSplit]:
        return _cached_splits(self)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "DataConfig":
        kw = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        cfg = cls(**kw)
        return replace(cfg, num_classes=int(cfg.num_classes), dim=int(cfg.dim), seed=int(cfg.seed),
                       n_train=int(cfg.n_train), n_val=int(cfg.n_val),
                       separation=float(cfg.separation), covariance_scale=float(cfg.covariance_scale),
                       label_noise=float(cfg.label_noise))


@lru_cache(maxsize=8)
def _cached_splits(cfg: DataConfig) -> tuple[DatasetSplit, DatasetSplit]:
    return generate(cfg.mixture(), cfg.n_train, cfg.n_val)


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig
    model: MlpSpec
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    lr: LrSchedule = field(default_factory=LrSchedule)
    distill: DistillConfig | None = None
    total_steps: int = 1000
    batch_size: int = 64
    eval_every: int = 100
    run_seed: int = 0
    mixup_alpha: float | None = None
    cost_tau: float = 0.5

    def __post_init__(self):
        if self.total_steps <= 0 or self.batch_size <= 0 or self.eval_every <= 0:
            raise DomainError("total_steps, batch_size and eval_every must be positive")
        if self.total_steps // self.eval_every < 5:
            raise DomainError(f"eval_every={self.eval_every} gives fewer than 5 evaluations "
                              f"over {self.total_steps} steps")
        if self.model.input_dim != self.data.dim or self.model.num_classes != self.data.num_classes:
            raise ContractError("model spec does not match the dataset's dim/classes")
        if self.mixup_alpha is not None and not self.mixup_alpha > 0:
            raise DomainError(f"mixup_alpha must be positive, got {self.mixup_alpha}")
        if self.cost_tau < 0:
            raise DomainError(f"cost_tau must be non-negative, got {self.cost_tau}")

    def to_dict(self) -> dict:
        return {
            "data": self.data.to_dict(),
            "model": self.model.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "lr": self.lr.with_total_steps(self.total_steps).to_dict(),
            "distill": None if self.distill is None else self.distill.to_dict(),
            "total_steps": self.total_steps,
            "batch_size": self.batch_size,
            "eval_every": self.eval_every,
            "run_seed": self.run_seed,
            "mixup_alpha": self.mixup_alpha,
            "cost_tau": self.cost_tau,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(
            data=DataConfig.from_dict(d["data"]),
            model=MlpSpec.from_dict(d["model"]),
            optimizer=OptimizerConfig.from_dict(d.get("optimizer") or {}),
            lr=LrSchedule.from_dict(d.get("lr") or {}),
            distill=None if d.get("distill") is None else DistillConfig.from_dict(d["distill"]),
            total_steps=int(d["total_steps"]),
            batch_size=int(d["batch_size"]),
            eval_every=int(d["eval_every"]),
            run_seed=int(d["run_seed"]),
            mixup_alpha=None if d.get("mixup_alpha") is None else float(d["mixup_alpha"]),
            cost_tau=float(d.get("cost_tau", 0.5)),
        )


@dataclass(frozen=True)
class TraceRow:
    step: int
    wall_ns: int
    teacher_fwds: int
    cost_units: float
    train_loss: float
    ce: float
    kd: float
    val_acc: float
    lr: float


@dataclass
class MetricTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        if self.rows:
            prev = self.rows[-1]
            if row.step <= prev.step:
                raise ContractError("trace steps must strictly increase")
            if row.wall_ns < prev.wall_ns or row.teacher_fwds < prev.teacher_fwds \
                    or row.cost_units < prev.cost_units:
                raise ContractError("trace counters must be non-decreasing")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.rows:
            w.writerow([r.step, r.wall_ns, r.teacher_fwds, repr(float(r.cost_units)), repr(r.train_loss),
                        repr(r.ce), repr(r.kd), repr(r.val_acc), repr(r.lr)])
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "MetricTrace":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != TRACE_HEADER:
            raise ContractError(f"unexpected metrics header {','.join(header)}")
        trace = cls()
        for rec in reader:
            if not rec:
                continue
            trace.append(TraceRow(int(rec[0]), int(rec[1]), int(rec[2]), float(rec[3]), float(rec[4]),
                                  float(rec[5]), float(rec[6]), float(rec[7]), float(rec[8])))
        return trace

    @classmethod
    def load(cls, path: str | Path) -> "MetricTrace":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


@dataclass
class TrainResult:
    params: ModelParams
    trace: MetricTrace
    meter: CostMeter

    def __iter__(self):
        # allows ``params, trace = train(...)``
        return iter((self.params, self.trace))


def _check_pool(run: RunConfig, pool: TeacherPool | None) -> None:
    if run.distill is None:
        return
    if pool is None:
        raise ContractError("a distillation config needs a teacher pool")
    if pool.spec.with_seed(0) != run.model.with_seed(0):
        raise ContractError("teacher architecture differs from the student's")
    run.distill.teacher_strategy.validate(pool)


def train(run: RunConfig, pool: TeacherPool | None = None) -> TrainResult:
    """Train one student (or baseline, when ``run.distill`` is None).

    Batch order, teacher sampling, and mixup each draw from their own stream
    derived from ``run.run_seed``; initialisation uses ``run.model.init_seed``.
    """
    _check_pool(run, pool)
    train_split, val_split = run.data.splits()
    total = run.total_steps
    sched = run.lr.with_total_steps(total)
    distill = run.distill
    dsched = distill.schedule.with_total_steps(total) if distill else None

    params = init(run.model)
    opt = Optimizer(run.optimizer)
    meter = CostMeter()
    trace = MetricTrace()
    stream = batch_stream(train_split, run.batch_size, derive_seed(run.run_seed, DATA_STREAM))
    teacher_seed = derive_seed(run.run_seed, TEACHER_STREAM)
    mixup_rng = seed_stream(run.run_seed, MIXUP_STREAM)
    tensors = params.parameters()

    # overflow is caught by the finiteness checks below, so numpy's warnings are noise here
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(total):
            t0 = time.perf_counter_ns()
            x, labels = next(stream)
            lr = lr_at(sched, step)
            targets = labels
            if run.mixup_alpha is not None:
                mixed, targets = mixup_batch(x.data, labels, run.data.num_classes, run.mixup_alpha, mixup_rng)
                x = ad.Tensor(mixed)
            active = distill is not None and distill_active(dsched, step)
            try:
                logits = forward(params, x)
                meter.charge_student()
                ce = cross_entropy(logits, targets)
                kd = None
                if active:
                    ids = select(distill.teacher_strategy, pool, step, seed=teacher_seed)
                    teacher_logits = ensemble_logits(pool, ids, x, meter)
                    kd = distill_loss(distill.loss_kind, logits, teacher_logits, distill.temperature)
                loss = composite(ce, kd, distill.lambda_kd if distill else 0.0, active)
                params.zero_grad()
                loss.backward()
            except NonFiniteError as exc:
                raise DivergenceError(step, lr, str(exc)) from exc
            if not math.isfinite(loss.item()):
                raise DivergenceError(step, lr, "non-finite loss")
            opt.step(tensors, lr)
            meter.add_wall(time.perf_counter_ns() - t0)

            done = step + 1
            if done % run.eval_every == 0 or done == total:
                if not params.is_finite():
                    raise DivergenceError(step, lr, "non-finite parameters")
                trace.append(TraceRow(
                    step=done,
                    wall_ns=meter.wall_clock_ns,
                    teacher_fwds=meter.teacher_forwards,
                    cost_units=meter.cost_units(run.cost_tau),
                    train_loss=loss.item(),
                    ce=ce.item(),
                    kd=kd.item() if kd is not None else 0.0,
                    val_acc=accuracy(params, val_split),
                    lr=lr,
                ))
    params.zero_grad()
    return TrainResult(params, trace, meter)


@dataclass(frozen=True)
class SweepPoint:
    lr: float
    weight_decay: float
    mixup_alpha: float | None = None

    @property
    def id(self) -> str:
        tag = f"lr{self.lr:g}_wd{self.weight_decay:g}"
        return tag + (f"_mix{self.mixup_alpha:g}" if self.mixup_alpha else "")

    def to_dict(self) -> dict:
        d = {"lr": self.lr, "weight_decay": self.weight_decay}
        if self.mixup_alpha is not None:
            d["mixup_alpha"] = self.mixup_alpha
        return d

    @classmethod
    def from_any(cls, p) -> "SweepPoint":
        if isinstance(p, SweepPoint):
            return p
        if isinstance(p, dict):
            mix = p.get("mixup_alpha")
            return cls(float(p["lr"]), float(p.get("weight_decay", 0.0)), None if mix is None else float(mix))
        lr, wd = p
        return cls(float(lr), float(wd))


def teacher_run(base: RunConfig, point: SweepPoint) -> RunConfig:
    """The baseline run for one grid point, with its own seeds keyed by the point's id."""
    seed = derive_seed(base.run_seed, "teacher", point.id)
    return replace(base, distill=None, lr=base.lr.with_base_lr(point.lr),
                   optimizer=base.optimizer.with_weight_decay(point.weight_decay),
                   mixup_alpha=point.mixup_alpha, run_seed=seed,
                   model=base.model.with_seed(derive_seed(seed, "init")))


@dataclass
class SweepEntry:
    point: SweepPoint
    run: RunConfig
    params: ModelParams
    reported_accuracy: float
    failed: bool
    error: str = ""
    trace: MetricTrace | None = None


def train_sweep_point(base: RunConfig, point) -> SweepEntry:
    """Train one grid point; a diverged run keeps its initial weights and is marked failed."""
    point = SweepPoint.from_any(point)
    run = teacher_run(base, point)
    try:
        params, trace = train(run)
        return SweepEntry(point, run, params.freeze(), trace.final.val_acc, False, trace=trace)
    except DivergenceError as exc:
        log.warning("teacher %s failed: %s", point.id, exc)
        params = init(run.model).freeze()
        _, val_split = run.data.splits()
        return SweepEntry(point, run, params, accuracy(params, val_split), True, str(exc))


def train_teacher_sweep(base: RunConfig, grid: list) -> TeacherPool:
    """One baseline model per (lr, weight_decay) grid point, all kept as frozen teachers."""
    if not grid:
        raise DomainError("the teacher grid is empty")
    entries = [train_sweep_point(base, p) for p in grid]
    teachers = [Teacher(e.point.id, e.params, e.reported_accuracy, e.failed, e.point.to_dict())
                for e in entries]
    return TeacherPool(teachers, rng_seed=derive_seed(base.run_seed, "pool"))


def final_params_digest(params: ModelParams) -> str:
    import hashlib
    h = hashlib.sha256()
    for name, arr in params.arrays().items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()
