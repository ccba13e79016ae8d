"""Sweep -> distill -> report orchestration over an experiment directory.

Layout under ``plan.output_dir``::

    teachers/manifest.yaml           registry (schema_version, teachers[])
    teachers/seed<S>/<id>.ckpt       frozen teacher checkpoints
    teachers/seed<S>/<id>.csv        teacher metric traces
    traces/<run_id>.csv              student metric traces
    traces/<run_id>.yaml             student run manifests
    report/                          see :mod:`distillbench.report`
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .config import ExperimentPlan, StudentJob
from .errors import ConfigError, ContractError, DistillBenchError
from .fsutil import atomic_write_text, content_hash, write_if_changed
from .models import save_checkpoint
from .teachers import TeacherPool, load_pool, registry_entries, registry_text
from .trainer import MetricTrace, SweepPoint, teacher_run, train, train_sweep_point

log = logging.getLogger(__name__)

RUN_MANIFEST_VERSION = 1


def teachers_dir(plan: ExperimentPlan) -> Path:
    return Path(plan.output_dir) / "teachers"


def traces_dir(plan: ExperimentPlan) -> Path:
    return Path(plan.output_dir) / "traces"


def _map(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# sweep ----------------------------------------------------------------------

@dataclass
class SweepSummary:
    trained: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)
    manifest_written: bool = False


def _train_teacher(task: tuple) -> dict:
    base, point, seed, root, digest = task
    entry = train_sweep_point(base, point)
    # ids contain dots (lr0.003), so build names by concatenation, not with_suffix
    stem = f"seed{seed}/{entry.point.id}"
    save_checkpoint(entry.params, Path(root) / f"{stem}.ckpt")
    if entry.trace is not None:
        entry.trace.save(Path(root) / f"{stem}.csv")
    return {
        "id": entry.point.id,
        "seed": seed,
        "checkpoint": f"{stem}.ckpt",
        "trace": f"{stem}.csv" if entry.trace is not None else None,
        "reported_accuracy": entry.reported_accuracy,
        "status": "failed" if entry.failed else "ok",
        "error": entry.error or None,
        "hyperparameters": entry.point.to_dict(),
        "config_hash": digest,
    }


def run_sweep(plan: ExperimentPlan) -> SweepSummary:
    """Train every (seed, grid point) teacher not already in the registry."""
    root = teachers_dir(plan)
    manifest = root / "manifest.yaml"
    known = {e.get("config_hash"): e for e in registry_entries(manifest)}
    summary = SweepSummary()
    slots: list[dict | tuple] = []
    for seed in plan.seeds:
        base = plan.teacher_base(seed)
        for point in plan.teacher_grid:
            digest = content_hash(teacher_run(base, point).to_dict())
            prior = known.get(digest)
            if prior is not None and (root / prior["checkpoint"]).exists():
                slots.append(prior)
                summary.skipped.append(f"seed{seed}/{point.id}")
            else:
                slots.append((base, point, seed, str(root), digest))
    done = iter(_map(_train_teacher, [s for s in slots if isinstance(s, tuple)], plan.jobs))
    entries = []
    for s in slots:
        if isinstance(s, tuple):
            e = next(done)
            bucket = summary.failed if e["status"] == "failed" else summary.trained
            bucket.append(f"seed{e['seed']}/{e['id']}")
            s = e
        entries.append(s)
    summary.manifest_written = write_if_changed(manifest, registry_text(entries))
    return summary


# distill --------------------------------------------------------------------

@dataclass
class DistillSummary:
    ran: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)


def _pool_fingerprint(pool: TeacherPool | None) -> list:
    if pool is None:
        return []
    return [{"id": t.id, "reported_accuracy": t.reported_accuracy, "failed": t.failed} for t in pool.teachers]


def _run_student(task: tuple) -> dict:
    job, manifest_path, out_dir, digest, fingerprint = task
    job: StudentJob
    pool = None
    doc = {
        "schema_version": RUN_MANIFEST_VERSION,
        "run_id": job.key,
        "variant": job.variant,
        "duration": job.duration,
        "seed": job.seed,
        "baseline": job.baseline,
        "config_hash": digest,
        "config": job.run.to_dict(),
        "teachers": fingerprint if job.run.distill is not None else [],
    }
    try:
        if job.run.distill is not None:
            pool = load_pool(manifest_path, seed=job.seed)
        result = train(job.run, pool)
    except (KeyError, DistillBenchError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) else str(exc)
        doc.update(status="failed", error=str(msg))
        atomic_write_text(Path(out_dir) / f"{job.key}.yaml", yaml.safe_dump(doc, sort_keys=False))
        return doc
    trace = result.trace
    trace.save(Path(out_dir) / f"{job.key}.csv")
    doc.update(status="ok", error=None, summary={
        "steps": trace.final.step,
        "final_val_acc": trace.final.val_acc,
        "teacher_fwds": trace.final.teacher_fwds,
        "cost_units": trace.final.cost_units,
        "wall_ns": trace.final.wall_ns,
    })
    atomic_write_text(Path(out_dir) / f"{job.key}.yaml", yaml.safe_dump(doc, sort_keys=False))
    return doc


def run_distill(plan: ExperimentPlan) -> DistillSummary:
    """Run every (variant x duration x seed) student, skipping ones already on disk."""
    manifest = teachers_dir(plan) / "manifest.yaml"
    needs_teachers = any(not v.is_baseline for v in plan.variants)
    if needs_teachers and not manifest.exists():
        raise ConfigError(f"{manifest}: teacher registry not found; run `sweep` first")
    out = traces_dir(plan)
    out.mkdir(parents=True, exist_ok=True)
    summary = DistillSummary()
    tasks = []
    for seed in plan.seeds:
        fingerprint, ids = [], []
        if needs_teachers:
            try:
                pool = load_pool(manifest, seed=seed)
                fingerprint, ids = _pool_fingerprint(pool), pool.ids
            except ContractError as exc:
                log.error("seed %s: %s", seed, exc)
        for job in plan.student_jobs(seed, ids):
            digest = content_hash({"run": job.run.to_dict(),
                                   "teachers": fingerprint if job.run.distill is not None else []})
            prior = out / f"{job.key}.yaml"
            if prior.exists():
                doc = yaml.safe_load(prior.read_text(encoding="utf-8")) or {}
                if doc.get("config_hash") == digest and doc.get("status") == "ok" \
                        and (out / f"{job.key}.csv").exists():
                    summary.skipped.append(job.key)
                    continue
            tasks.append((job, str(manifest), str(out), digest, fingerprint))
    for doc in _map(_run_student, tasks, plan.jobs):
        if doc["status"] == "ok":
            summary.ran.append(doc["run_id"])
        else:
            summary.failed[doc["run_id"]] = doc["error"]
    return summary


# trace loading for reports ----------------------------------------------------

@dataclass
class RunRecord:
    run_id: str
    variant: str
    duration: float
    seed: int
    baseline: bool
    trace: MetricTrace
    teachers: list[dict]
    distill: dict | None


def load_runs(directory: str | Path) -> list[RunRecord]:
    """Successful runs found in a traces directory, sorted by run id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ContractError(f"{directory}: traces directory not found")
    runs = []
    for path in sorted(directory.glob("*.yaml")):
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if doc.get("status") != "ok":
            continue
        trace = MetricTrace.load(path.parent / f"{path.stem}.csv")
        runs.append(RunRecord(doc["run_id"], doc["variant"], float(doc["duration"]), int(doc["seed"]),
                              bool(doc["baseline"]), trace, list(doc.get("teachers") or []),
                              (doc.get("config") or {}).get("distill")))
    return runs


__all__ = ["run_sweep", "run_distill", "load_runs", "SweepPoint", "teachers_dir", "traces_dir"]
