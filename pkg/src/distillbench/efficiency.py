"""Time-to-accuracy, speedups, Pareto fronts, and teacher-vs-student rankings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError


@dataclass(frozen=True)
class QualityCurve:
    """(resource, quality) observations with strictly increasing resource."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(r), float(q)) for r, q in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise ContractError(f"a quality curve needs at least 2 points, got {len(pts)}")
        for (r0, _), (r1, _) in zip(pts, pts[1:]):
            if not r1 > r0:
                raise ContractError(f"curve resources must strictly increase ({r0} then {r1})")
        if any(not 0.0 <= q <= 1.0 for _, q in pts):
            raise ContractError("curve qualities must lie in [0, 1]")

    @property
    def resources(self) -> list[float]:
        return [r for r, _ in self.points]

    @property
    def qualities(self) -> list[float]:
        return [q for _, q in self.points]

    @property
    def final_quality(self) -> float:
        return self.points[-1][1]

    @property
    def final_resource(self) -> float:
        return self.points[-1][0]

    def rescaled(self, factor: float) -> "QualityCurve":
        return QualityCurve(tuple((r * factor, q) for r, q in self.points))


def time_to_quality(curve: QualityCurve, target: float) -> float | None:
    """Resource at the first observation reaching ``target``; no interpolation."""
    if not 0.0 < target <= 1.0:
        raise ContractError(f"target quality must lie in (0, 1], got {target}")
    for r, q in curve.points:
        if q >= target:
            return r
    return None


@dataclass(frozen=True)
class SpeedupReport:
    target_quality: float
    baseline_resource: float | None
    candidate_resource: float | None
    baseline_achieved: bool
    candidate_achieved: bool

    @property
    def achieved(self) -> bool:
        return self.baseline_achieved and self.candidate_achieved

    @property
    def speedup(self) -> float | None:
        """baseline / candidate resource, or None when either side misses the target."""
        if not self.achieved:
            return None
        return self.baseline_resource / self.candidate_resource

    def to_dict(self) -> dict:
        return {"target_quality": self.target_quality, "baseline_resource": self.baseline_resource,
                "candidate_resource": self.candidate_resource, "baseline_achieved": self.baseline_achieved,
                "candidate_achieved": self.candidate_achieved, "speedup": self.speedup}


def speedup(baseline: QualityCurve, candidate: QualityCurve, target: float | None = None) -> SpeedupReport:
    """Compare time-to-quality at ``target`` (default: the baseline's final quality)."""
    if target is None:
        target = baseline.final_quality
    b = time_to_quality(baseline, target)
    c = time_to_quality(candidate, target)
    return SpeedupReport(target, b, c, b is not None, c is not None)


@dataclass(frozen=True)
class ParetoPoint:
    run_id: str
    resource: float
    quality: float
    dominated: bool


def pareto_front(points, run_ids=None) -> list[ParetoPoint]:
    """Flag every point dominated in the (lower resource, higher quality) sense.

    All points are returned, sorted by resource then descending quality.
    Identical points never dominate each other.
    """
    pts = [(float(r), float(q)) for r, q in points]
    ids = [str(i) for i in (run_ids if run_ids is not None else range(len(pts)))]
    if len(ids) != len(pts):
        raise ContractError("run_ids and points differ in length")
    order = sorted(range(len(pts)), key=lambda i: (pts[i][0], -pts[i][1], ids[i]))
    dominated = [False] * len(pts)
    best_cheaper = -math.inf  # best quality among strictly smaller resources
    i = 0
    while i < len(order):
        j = i
        r = pts[order[i]][0]
        while j < len(order) and pts[order[j]][0] == r:
            j += 1
        group = order[i:j]
        group_best = pts[group[0]][1]
        for idx in group:
            q = pts[idx][1]
            dominated[idx] = best_cheaper >= q or group_best > q
        best_cheaper = max(best_cheaper, group_best)
        i = j
    return [ParetoPoint(ids[k], pts[k][0], pts[k][1], dominated[k]) for k in order]


def front_only(points: list[ParetoPoint]) -> list[ParetoPoint]:
    return [p for p in points if not p.dominated]


@dataclass(frozen=True)
class TeacherStudentRow:
    teacher_id: str
    teacher_accuracy: float
    teacher_rank: float
    student_quality: float
    student_rank: float
    speedup: float | None


@dataclass
class TeacherStudentTable:
    rows: list[TeacherStudentRow] = field(default_factory=list)
    spearman: float | None = None
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "spearman": self.spearman,
            "degenerate": "constant-ranks" if self.degenerate else None,
            "rows": [r.__dict__ for r in self.rows],
        }


def spearman(a, b) -> float | None:
    """Rank correlation with average ranks for ties; None when either side is constant."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if len(a) != len(b):
        raise ContractError("spearman inputs differ in length")
    if len(a) < 2 or np.all(a == a[0]) or np.all(b == b[0]):
        return None
    ra, rb = rankdata(a), rankdata(b)
    return float(np.corrcoef(ra, rb)[0, 1])


def teacher_student_table(teachers, students: dict) -> TeacherStudentTable:
    """Pair each teacher's accuracy rank with the rank of the student it taught.

    ``teachers`` is a TeacherPool or an iterable of (id, accuracy); ``students``
    maps teacher id to (student final quality, SpeedupReport or None).
    Rank 1 is the best on both sides.
    """
    if hasattr(teachers, "teachers"):
        teachers = [(t.id, t.reported_accuracy) for t in teachers.teachers]
    pairs = [(tid, acc) for tid, acc in teachers if tid in students]
    if not pairs:
        return TeacherStudentTable()
    t_acc = [acc for _, acc in pairs]
    s_q = [students[tid][0] for tid, _ in pairs]
    t_rank = rankdata([-a for a in t_acc])
    s_rank = rankdata([-q for q in s_q])
    rows = []
    for (tid, acc), tr, sq, sr in zip(pairs, t_rank, s_q, s_rank):
        rep = students[tid][1]
        rows.append(TeacherStudentRow(tid, acc, float(tr), sq, float(sr), rep.speedup if rep else None))
    rows.sort(key=lambda r: (r.teacher_rank, r.teacher_id))
    rho = spearman(t_acc, s_q)
    return TeacherStudentTable(rows, rho, rho is None)
