"""Experiment plans: a versioned YAML document describing sweep, students and seeds."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .errors import ConfigError, DistillBenchError
from .fsutil import derive_seed
from .losses import DistillConfig
from .models import MlpSpec
from .optim import OptimizerConfig
from .schedules import LrSchedule
from .teachers import TeacherStrategy
from .trainer import DataConfig, RunConfig, SweepPoint

SCHEMA_VERSION = 1
STANDARD_DURATIONS = (0.25, 0.5, 1.0, 1.5, 2.0)


@dataclass(frozen=True)
class TrainingConfig:
    total_steps: int = 2000
    batch_size: int = 64
    eval_every: int = 50
    cost_tau: float = 0.5
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    lr_schedule: LrSchedule = field(default_factory=LrSchedule)

    def to_dict(self) -> dict:
        lr = self.lr_schedule.to_dict()
        lr.pop("total_steps")
        return {"total_steps": self.total_steps, "batch_size": self.batch_size, "eval_every": self.eval_every,
                "cost_tau": self.cost_tau, "optimizer": self.optimizer.to_dict(), "lr_schedule": lr}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        total = int(d.get("total_steps", 2000))
        lr = dict(d.get("lr_schedule") or {})
        lr["total_steps"] = total
        return cls(total_steps=total, batch_size=int(d.get("batch_size", 64)),
                   eval_every=int(d.get("eval_every", 50)), cost_tau=float(d.get("cost_tau", 0.5)),
                   optimizer=OptimizerConfig.from_dict(d.get("optimizer") or {}),
                   lr_schedule=LrSchedule.from_dict(lr))


@dataclass(frozen=True)
class Variant:
    """One student recipe run at several durations; ``distill=None`` is a baseline.

    With ``per_teacher`` set, the variant expands into one single-teacher
    student per registered teacher.
    """

    name: str
    distill: DistillConfig | None = None
    durations: tuple[float, ...] = (1.0,)
    per_teacher: bool = False

    @property
    def is_baseline(self) -> bool:
        return self.distill is None

    def to_dict(self) -> dict:
        d: dict = {"name": self.name, "durations": list(self.durations)}
        if self.distill is not None:
            d["distill"] = self.distill.to_dict()
        if self.per_teacher:
            d["per_teacher"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Variant":
        distill = d.get("distill")
        return cls(name=str(d["name"]),
                   distill=None if distill is None else DistillConfig.from_dict(distill),
                   durations=tuple(float(x) for x in d.get("durations", [1.0])),
                   per_teacher=bool(d.get("per_teacher", False)))


@dataclass(frozen=True)
class StudentJob:
    key: str
    variant: str
    duration: float
    seed: int
    run: RunConfig
    baseline: bool


@dataclass(frozen=True)
class ExperimentPlan:
    name: str
    data: DataConfig
    hidden_widths: tuple[int, ...]
    training: TrainingConfig
    teacher_grid: tuple[SweepPoint, ...]
    variants: tuple[Variant, ...]
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "runs"
    jobs: int = 1

    def __post_init__(self):
        if not self.variants or not any(v.is_baseline for v in self.variants):
            raise ConfigError("variants: at least one baseline (no distill) variant is required")
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ConfigError(f"variants: names must be unique, got {names}")
        for v in self.variants:
            if not v.durations or any(not x > 0 for x in v.durations):
                raise ConfigError(f"variants.{v.name}.durations: multipliers must be positive")
            if v.per_teacher and v.distill is None:
                raise ConfigError(f"variants.{v.name}: per_teacher needs a distill section")
        if not self.seeds:
            raise ConfigError("seeds: at least one seed is required")
        if self.jobs < 1:
            raise ConfigError("jobs: must be >= 1")
        if not self.teacher_grid and any(not v.is_baseline for v in self.variants):
            raise ConfigError("teacher_grid: distilled variants need at least one teacher")

    def with_overrides(self, output_dir: str | None = None, jobs: int | None = None,
                       seed_offset: int = 0) -> "ExperimentPlan":
        return replace(self,
                       output_dir=self.output_dir if output_dir is None else str(output_dir),
                       jobs=self.jobs if jobs is None else jobs,
                       seeds=tuple(s + seed_offset for s in self.seeds))

    def model_spec(self, init_seed: int = 0) -> MlpSpec:
        return MlpSpec(self.data.dim, self.hidden_widths, self.data.num_classes, init_seed)

    def base_run(self, seed: int, role: str, total_steps: int | None = None) -> RunConfig:
        """RunConfig with seeds split from (plan seed, role); see :func:`derive_seed`."""
        t = self.training
        total = t.total_steps if total_steps is None else total_steps
        eval_every = min(t.eval_every, max(total // 5, 1))
        run_seed = derive_seed(seed, role)
        return RunConfig(data=self.data, model=self.model_spec(derive_seed(seed, role, "init")),
                         optimizer=t.optimizer, lr=t.lr_schedule.with_total_steps(total), distill=None,
                         total_steps=total, batch_size=t.batch_size, eval_every=eval_every,
                         run_seed=run_seed, cost_tau=t.cost_tau)

    def teacher_base(self, seed: int) -> RunConfig:
        return self.base_run(seed, "teachers")

    def student_jobs(self, seed: int, teacher_ids: list[str] | None = None) -> list[StudentJob]:
        """All student runs for one seed.

        Every student of a seed shares init and batch order (role "student"),
        so variants differ only in their recipe.
        """
        jobs = []
        for v in self.variants:
            recipes: list[tuple[str, DistillConfig | None]]
            if v.per_teacher:
                recipes = [(f"{v.name}-{tid}", replace(v.distill, teacher_strategy=TeacherStrategy.single_by_id(tid)))
                           for tid in (teacher_ids or [])]
            else:
                recipes = [(v.name, v.distill)]
            for name, distill in recipes:
                for dur in v.durations:
                    total = max(int(round(self.training.total_steps * dur)), 5)
                    run = replace(self.base_run(seed, "student", total), distill=distill)
                    jobs.append(StudentJob(f"{name}__d{dur:g}__s{seed}", name, dur, seed, run, v.is_baseline))
        return jobs

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "output_dir": self.output_dir,
            "jobs": self.jobs,
            "seeds": list(self.seeds),
            "dataset": self.data.to_dict(),
            "model": {"hidden_widths": list(self.hidden_widths)},
            "training": self.training.to_dict(),
            "teacher_grid": [p.to_dict() for p in self.teacher_grid],
            "variants": [v.to_dict() for v in self.variants],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        if not isinstance(d, dict):
            raise ConfigError("config root must be a mapping")
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
        section = "?"
        try:
            section = "dataset"
            data = DataConfig.from_dict(d["dataset"])
            section = "model"
            widths = tuple(int(w) for w in d["model"]["hidden_widths"])
            section = "training"
            training = TrainingConfig.from_dict(d.get("training") or {})
            section = "teacher_grid"
            grid = tuple(SweepPoint.from_any(p) for p in d.get("teacher_grid") or [])
            section = "variants"
            variants = tuple(Variant.from_dict(v) for v in d["variants"])
            section = "seeds"
            seeds = tuple(int(s) for s in d.get("seeds", [0]))
            section = "name"
            return cls(name=str(d["name"]), data=data, hidden_widths=widths, training=training,
                       teacher_grid=grid, variants=variants, seeds=seeds,
                       output_dir=str(d.get("output_dir", "runs")), jobs=int(d.get("jobs", 1)))
        except ConfigError:
            raise
        except KeyError as exc:
            raise ConfigError(f"{section}: missing field {exc.args[0]!r}") from exc
        except (TypeError, ValueError, DistillBenchError) as exc:
            raise ConfigError(f"{section}: {exc}") from exc

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


def parse_plan(text: str, source: str = "<config>") -> ExperimentPlan:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{source}: YAML syntax error at {where}: {getattr(exc, 'problem', exc)}") from exc
    try:
        return ExperimentPlan.from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_plan(path: str | Path) -> ExperimentPlan:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_plan(text, str(path))
