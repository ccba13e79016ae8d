"""Speedup reports, Pareto CSVs, teacher/student tables and figures from run traces.

Files written to the report directory:

``speedups.csv``
    one row per non-reference run, both resource axes.
``pareto_cost.csv``, ``pareto_wall.csv``
    ``resource,quality,run_id,dominated`` over every run's final point.
``teacher_student_seed<S>.csv``
    present when the plan has a per-teacher variant.
``summary.yaml``
    everything above plus baselines, per-variant means and the best-single-teacher views.
``figures/*.png``
    quality-vs-resource curves and Pareto scatters.

Anything derived from wall-clock time lives in a column or key whose name
starts with ``wall`` (or in ``pareto_wall.csv``); :func:`masked_report` blanks
exactly those so reports can be compared byte for byte.
"""

from __future__ import annotations

import csv
import io
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .efficiency import (ParetoPoint, QualityCurve, SpeedupReport, pareto_front, speedup,
                         teacher_student_table)
from .errors import ContractError
from .fsutil import atomic_write_text
from .harness import RunRecord, load_runs

AXES = ("cost", "wall")
REPORT_VERSION = 1
PARETO_HEADER = ("resource", "quality", "run_id", "dominated")
SPEEDUP_HEADER = ("run_id", "variant", "seed", "duration", "final_quality", "teacher_fwds", "target_quality",
                  "cost_baseline", "cost_candidate", "cost_speedup",
                  "wall_baseline", "wall_candidate", "wall_speedup")


class ReportError(ContractError):
    pass


def curve_points(trace, axis: str) -> list[tuple[float, float]]:
    """(resource, val_acc) per trace row; rows that do not advance the resource are dropped."""
    pts: list[tuple[float, float]] = []
    for r in trace.rows:
        x = r.cost_units if axis == "cost" else r.wall_ns / 1e9
        if not pts or x > pts[-1][0]:
            pts.append((x, r.val_acc))
    return pts


def curve(run: RunRecord, axis: str) -> QualityCurve:
    return QualityCurve(tuple(curve_points(run.trace, axis)))


def _final_resource(run: RunRecord, axis: str) -> float:
    last = run.trace.final
    return last.cost_units if axis == "cost" else last.wall_ns / 1e9


def pick_baselines(runs: list[RunRecord]) -> dict[int, RunRecord]:
    """Per seed, the full-length baseline (ties broken by run id)."""
    out: dict[int, RunRecord] = {}
    for r in sorted(runs, key=lambda r: r.run_id):
        if r.baseline and r.duration == 1.0 and r.seed not in out:
            out[r.seed] = r
    if not out:
        raise ReportError("no baseline run (distill: null, duration 1.0) found; "
                          "a report needs at least one baseline and one candidate")
    return out


@dataclass
class Report:
    speedups: list[dict] = field(default_factory=list)
    pareto: dict[str, list[ParetoPoint]] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)


def _fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def pareto_csv(points: list[ParetoPoint]) -> str:
    return _csv(PARETO_HEADER, [(p.resource, p.quality, p.run_id, p.dominated) for p in points])


def pareto_for_runs(runs: list[RunRecord], axis: str) -> list[ParetoPoint]:
    return pareto_front([(_final_resource(r, axis), r.trace.final.val_acc) for r in runs],
                        [r.run_id for r in runs])


def _speedup_dict(rep: SpeedupReport) -> dict:
    return {"baseline_resource": rep.baseline_resource, "candidate_resource": rep.candidate_resource,
            "achieved": rep.candidate_achieved, "speedup": rep.speedup}


def _teacher_student(runs: list[RunRecord], base: RunRecord, axis: str = "cost") -> dict:
    """Tables over per-teacher (single_by_id) runs, one per duration."""
    by_duration: dict[float, dict[str, tuple]] = defaultdict(dict)
    accuracies: dict[str, float] = {}
    for r in runs:
        strat = ((r.distill or {}).get("teacher") or {})
        if strat.get("kind") != "single_by_id":
            continue
        tid = strat["id"]
        for t in r.teachers:
            accuracies[t["id"]] = t["reported_accuracy"]
        rep = speedup(curve(base, axis), curve(r, axis))
        by_duration[r.duration][tid] = (r.trace.final.val_acc, rep)
    out = {}
    for dur, students in sorted(by_duration.items()):
        table = teacher_student_table(sorted(accuracies.items()), students)
        out[dur] = table
    return out


def _best_single_views(runs: list[RunRecord], base: RunRecord) -> dict:
    """Per duration: the hindsight pick (best student outcome) vs the forecast pick (best teacher accuracy)."""
    views = {}
    per_teacher = [r for r in runs if ((r.distill or {}).get("teacher") or {}).get("kind") == "single_by_id"]
    for dur in sorted({r.duration for r in per_teacher}):
        group = [r for r in per_teacher if r.duration == dur]
        hindsight = max(group, key=lambda r: (r.trace.final.val_acc, r.run_id))
        acc = {t["id"]: t["reported_accuracy"] for t in group[0].teachers}
        forecast_id = sorted(acc, key=lambda i: (-acc[i], i))[0]
        forecast = next((r for r in group if r.distill["teacher"]["id"] == forecast_id), None)
        views[dur] = {
            "hindsight": {"run_id": hindsight.run_id, "final_quality": hindsight.trace.final.val_acc,
                          "label": "selected after seeing student results"},
            "forecast": None if forecast is None else {
                "run_id": forecast.run_id, "final_quality": forecast.trace.final.val_acc,
                "label": "teacher with the best reported accuracy"},
        }
    return views


def build_report(traces: str | Path, out_dir: str | Path, figures: bool = True) -> Report:
    runs = load_runs(traces)
    baselines = pick_baselines(runs)
    candidates = [r for r in runs if r.seed in baselines and r is not baselines[r.seed]]
    if not candidates:
        raise ReportError("no candidate runs to compare against the baseline")
    out_dir = Path(out_dir)
    report = Report()

    base_curves = {s: {a: curve(b, a) for a in AXES} for s, b in baselines.items()}
    for r in candidates:
        reps = {a: speedup(base_curves[r.seed][a], curve(r, a)) for a in AXES}
        report.speedups.append({
            "run_id": r.run_id, "variant": r.variant, "seed": r.seed, "duration": r.duration,
            "final_quality": r.trace.final.val_acc, "teacher_fwds": r.trace.final.teacher_fwds,
            "target_quality": reps["cost"].target_quality,
            "cost": _speedup_dict(reps["cost"]), "wall": _speedup_dict(reps["wall"]),
        })

    for axis in AXES:
        report.pareto[axis] = pareto_for_runs(runs, axis)

    means: dict[str, dict] = {}
    groups: dict[tuple, list[dict]] = defaultdict(list)
    for row in report.speedups:
        groups[(row["variant"], row["duration"])].append(row)
    for (variant, dur), rows in sorted(groups.items()):
        cost = [x["cost"]["speedup"] for x in rows if x["cost"]["speedup"] is not None]
        wall = [x["wall"]["speedup"] for x in rows if x["wall"]["speedup"] is not None]
        means[f"{variant}__d{dur:g}"] = {
            "seeds": len(rows),
            "mean_final_quality": statistics.fmean(x["final_quality"] for x in rows),
            "cost_achieved": len(cost),
            "cost_mean_speedup": statistics.fmean(cost) if cost else None,
            "wall_mean_speedup": statistics.fmean(wall) if wall else None,
        }

    teacher_tables = {}
    best_views = {}
    for seed, base in sorted(baselines.items()):
        seed_runs = [r for r in candidates if r.seed == seed]
        tables = _teacher_student(seed_runs, base)
        if tables:
            teacher_tables[seed] = tables
            best_views[seed] = _best_single_views(seed_runs, base)

    report.summary = {
        "schema_version": REPORT_VERSION,
        "baselines": {s: {"run_id": b.run_id, "final_quality": b.trace.final.val_acc,
                          "cost_total": b.trace.final.cost_units, "wall_total": b.trace.final.wall_ns / 1e9}
                      for s, b in sorted(baselines.items())},
        "speedups": report.speedups,
        "means": means,
        "pareto_front": {a: [p.run_id for p in report.pareto[a] if not p.dominated] for a in AXES},
        "teacher_student": {s: {f"d{d:g}": t.to_dict() for d, t in tabs.items()}
                            for s, tabs in teacher_tables.items()},
        "best_single_teacher": {s: {f"d{d:g}": v for d, v in views.items()} for s, views in best_views.items()},
    }

    files = {
        "speedups.csv": _csv(SPEEDUP_HEADER, [
            (x["run_id"], x["variant"], x["seed"], x["duration"], x["final_quality"], x["teacher_fwds"],
             x["target_quality"], x["cost"]["baseline_resource"], x["cost"]["candidate_resource"],
             x["cost"]["speedup"], x["wall"]["baseline_resource"], x["wall"]["candidate_resource"],
             x["wall"]["speedup"]) for x in report.speedups]),
        "summary.yaml": yaml.safe_dump(report.summary, sort_keys=False),
    }
    for axis in AXES:
        files[f"pareto_{axis}.csv"] = pareto_csv(report.pareto[axis])
    for seed, tabs in teacher_tables.items():
        rows = []
        for dur, t in tabs.items():
            rows += [(dur, r.teacher_id, r.teacher_accuracy, r.teacher_rank, r.student_quality, r.student_rank,
                      r.speedup) for r in t.rows]
        files[f"teacher_student_seed{seed}.csv"] = _csv(
            ("duration", "teacher_id", "teacher_accuracy", "teacher_rank", "student_quality", "student_rank",
             "cost_speedup"), rows)
    for name, text in files.items():
        atomic_write_text(out_dir / name, text)
        report.files.append(out_dir / name)

    if figures:
        from .plotting import plot_curves, plot_pareto
        for axis in AXES:
            by_seed: dict[int, dict] = defaultdict(dict)
            for r in runs:
                if r.seed in baselines:
                    by_seed[r.seed][r.run_id] = curve_points(r.trace, axis)
            report.files.append(plot_curves(by_seed, axis, out_dir / "figures" / f"curves_{axis}.png",
                                            {s: b.run_id for s, b in baselines.items()}))
            report.files.append(plot_pareto(report.pareto[axis], axis, out_dir / "figures" / f"pareto_{axis}.png"))
    return report


# masking for determinism checks ---------------------------------------------------

def _mask_csv(text: str, wall_file: bool) -> str:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return text
    header, body = rows[0], rows[1:]
    drop = {i for i, h in enumerate(header) if h.startswith("wall")}
    if wall_file:
        drop |= {header.index("resource"), header.index("dominated")}
    body = [["*" if i in drop else v for i, v in enumerate(row)] for row in body]
    if wall_file:
        body.sort()
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows([header, *body])
    return buf.getvalue()


def _mask_tree(obj):
    if isinstance(obj, dict):
        return {k: ("*" if isinstance(k, str) and k.startswith("wall") else _mask_tree(v)) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_mask_tree(v) for v in obj]
    return obj


def masked_report(report_dir: str | Path) -> dict[str, str]:
    """Report text files with every wall-clock-derived field replaced by ``*``.

    Figures are excluded.
    """
    report_dir = Path(report_dir)
    out = {}
    for path in sorted(report_dir.iterdir()):
        if path.suffix == ".csv":
            out[path.name] = _mask_csv(path.read_text(encoding="utf-8"), "wall" in path.stem)
        elif path.suffix == ".yaml":
            doc = yaml.safe_load(path.read_text(encoding="utf-8"))
            out[path.name] = yaml.safe_dump(_mask_tree(doc), sort_keys=False)
    return out
