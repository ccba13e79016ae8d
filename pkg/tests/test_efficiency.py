import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import (REF_BASELINE_MIN, REF_CANDIDATE_MIN, REF_SLOW_CANDIDATE_MIN, dominance_oracle,
                      ref_curves)
from distillbench.efficiency import (QualityCurve, front_only, pareto_front, speedup, spearman,
                                     teacher_student_table, time_to_quality)
from distillbench.errors import ContractError

curves = st.lists(st.tuples(st.floats(0.01, 100.0), st.floats(0.0, 1.0)), min_size=2, max_size=30).map(
    lambda pts: QualityCurve(tuple(zip(np.cumsum([p[0] for p in pts]).tolist(), [p[1] for p in pts]))))


def test_curve_validation():
    with pytest.raises(ContractError):
        QualityCurve(((1.0, 0.5),))
    with pytest.raises(ContractError):
        QualityCurve(((1.0, 0.5), (1.0, 0.6)))
    with pytest.raises(ContractError):
        QualityCurve(((1.0, 0.5), (2.0, 1.2)))


def test_time_to_quality_examples():
    c = QualityCurve(((10.0, 0.5), (20.0, 0.76), (30.0, 0.766)))
    assert time_to_quality(c, 0.766) == 30.0
    assert time_to_quality(c, 0.3) == 10.0
    assert time_to_quality(c, 0.9) is None
    for bad in (0.0, 1.5):
        with pytest.raises(ContractError):
            time_to_quality(c, bad)


def test_worked_speedup_and_slowdown():
    base, cand = ref_curves(REF_CANDIDATE_MIN)
    rep = speedup(base, cand)
    assert rep.target_quality == 0.766
    assert rep.speedup == pytest.approx(1.963, abs=1e-3)
    assert rep.baseline_resource == REF_BASELINE_MIN
    base, slow = ref_curves(REF_SLOW_CANDIDATE_MIN)
    assert speedup(base, slow).speedup == pytest.approx(0.899, abs=1e-3)


def test_unreached_target_is_explicit():
    base = QualityCurve(((1.0, 0.5), (2.0, 0.8)))
    cand = QualityCurve(((1.0, 0.5), (2.0, 0.7)))
    rep = speedup(base, cand)
    assert not rep.candidate_achieved and rep.speedup is None
    assert rep.to_dict()["speedup"] is None


@settings(max_examples=100, deadline=None)
@given(curves, st.floats(0.01, 1000.0))
def test_speedup_self_and_rescale(c, factor):
    if c.final_quality <= 0:
        return
    assert speedup(c, c).speedup == 1.0
    other = QualityCurve(tuple((r * 1.7, q) for r, q in c.points))
    a = speedup(c, other).speedup
    b = speedup(c.rescaled(factor), other.rescaled(factor)).speedup
    assert a == pytest.approx(b, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(curves, st.floats(0.001, 1.0), st.floats(0.001, 1.0))
def test_time_to_quality_monotone(c, t1, t2):
    lo, hi = sorted((t1, t2))
    a, b = time_to_quality(c, lo), time_to_quality(c, hi)
    if b is not None:
        assert a is not None and a <= b


def test_pareto_examples():
    pts = pareto_front([(1, 0.5), (2, 0.6), (3, 0.55)], ["a", "b", "c"])
    assert [(p.run_id, p.dominated) for p in pts] == [("a", False), ("b", False), ("c", True)]
    assert [p.run_id for p in front_only(pts)] == ["a", "b"]
    assert pareto_front([(5, 0.1)])[0].dominated is False
    dup = pareto_front([(1, 0.5), (1, 0.5), (2, 0.4)])
    assert [p.dominated for p in dup] == [False, False, True]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=25))
def test_pareto_matches_oracle_with_ties(raw):
    pts = [(float(r), q / 6) for r, q in raw]
    got = pareto_front(pts)
    flags = dominance_oracle(pts)
    by_id = {int(p.run_id): p.dominated for p in got}
    assert [by_id[i] for i in range(len(pts))] == flags
    assert [p.resource for p in got] == sorted(p.resource for p in got)


def test_pareto_oracle_random(rng):
    pts = list(zip(rng.uniform(0, 10, 100).tolist(), rng.uniform(0, 1, 100).tolist()))
    got = {int(p.run_id): p.dominated for p in pareto_front(pts)}
    assert [got[i] for i in range(100)] == dominance_oracle(pts)


def test_spearman():
    assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert spearman([1, 2, 3], [0.5, 0.5, 0.5]) is None


def test_teacher_student_table():
    teachers = [("a", 0.9), ("b", 0.8), ("c", 0.7)]
    aligned = teacher_student_table(teachers, {"a": (0.85, None), "b": (0.84, None), "c": (0.83, None)})
    assert aligned.spearman == pytest.approx(1.0) and not aligned.degenerate
    assert [r.teacher_id for r in aligned.rows] == ["a", "b", "c"]
    flat = teacher_student_table(teachers, {t: (0.8, None) for t, _ in teachers})
    assert flat.spearman is None and flat.degenerate
    assert flat.to_dict()["degenerate"] == "constant-ranks"
