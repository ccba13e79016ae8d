import threading

import numpy as np
import pytest
from scipy import stats

from conftest import TINY_DATA, constant_teacher, random_pool
from distillbench.errors import ContractError, DomainError
from distillbench.models import MlpSpec, checkpoint_bytes, init, save_checkpoint
from distillbench.teachers import (CostMeter, Teacher, TeacherPool, TeacherStrategy, ensemble_logits,
                                   greedy_members, load_pool, per_step_cost, select, write_registry)

SPEC = MlpSpec(3, (4,), 2)


def test_pool_invariants():
    t = init(SPEC)
    with pytest.raises(ContractError):
        TeacherPool([Teacher("a", t, 0.5), Teacher("a", t, 0.6)])
    with pytest.raises(ContractError):
        TeacherPool([Teacher("a", t, 0.5), Teacher("b", init(MlpSpec(3, (5,), 2)), 0.6)])
    with pytest.raises(ContractError):
        TeacherPool([])
    pool = TeacherPool([Teacher("a", init(SPEC), 0.5)])
    assert pool["a"].params.frozen


def test_greedy_members():
    pool = random_pool(3, spec=SPEC, accuracies=[0.65, 0.70, 0.70])  # t0=.65, t1=.70, t2=.70
    assert greedy_members(pool, 2) == ["t1", "t2"]
    assert greedy_members(pool, 1) == ["t1"]
    assert greedy_members(pool, 3) == ["t1", "t2", "t0"]
    named = TeacherPool([Teacher("C", init(SPEC), 0.65), Teacher("B", init(SPEC), 0.70),
                         Teacher("A", init(SPEC), 0.70)])
    assert greedy_members(named, 2) == ["A", "B"]
    for k in (0, 4):
        with pytest.raises(DomainError):
            greedy_members(pool, k)


def test_select_fixed_strategies():
    pool = random_pool(4, spec=SPEC)
    assert select(TeacherStrategy.single_best(), pool, 0) == ["t3"]
    assert select(TeacherStrategy.single_by_id("t1"), pool, 5) == ["t1"]
    assert select(TeacherStrategy.greedy(2), pool, 0) == select(TeacherStrategy.greedy(2), pool, 99)
    with pytest.raises(KeyError):
        select(TeacherStrategy.single_by_id("nope"), pool, 0)
    with pytest.raises(DomainError):
        select(TeacherStrategy.greedy(5), pool, 0)


def test_random_single_pool_of_one():
    pool = random_pool(1, spec=SPEC)
    assert all(select(TeacherStrategy.random_single(), pool, s) == ["t0"] for s in range(50))


def test_random_subset_exhaustion_and_distinct():
    pool = random_pool(5, spec=SPEC)
    assert sorted(select(TeacherStrategy.random_subset(5), pool, 3)) == pool.ids
    for step in range(100):
        ids = select(TeacherStrategy.random_subset(3), pool, step)
        assert len(set(ids)) == 3


def test_random_single_uniform_chi_square():
    pool = random_pool(5, spec=SPEC, seed=2024)
    counts = {i: 0 for i in pool.ids}
    for step in range(10_000):
        counts[select(TeacherStrategy.random_single(), pool, step)[0]] += 1
    stat, p = stats.chisquare(list(counts.values()))
    assert stats.chi2.ppf(1 - 1e-3, 4) == pytest.approx(18.4668, abs=1e-4)
    assert stat < 18.4668 and p > 1e-3


def test_select_replay_is_exact():
    pool = random_pool(5, spec=SPEC, seed=7)
    strat = TeacherStrategy.random_subset(2)
    a = [select(strat, pool, s) for s in range(500)]
    b = [select(strat, pool, s) for s in range(500)]
    assert a == b
    assert a != [select(strat, pool, s, seed=8) for s in range(500)]
    assert len({tuple(x) for x in a}) > 5


def test_ensemble_logits_mean_and_order(rng):
    pool = TeacherPool([constant_teacher(SPEC, [1.0, 3.0], "a"), constant_teacher(SPEC, [3.0, 1.0], "b")])
    x = rng.normal(size=(4, 3))
    meter = CostMeter()
    out = ensemble_logits(pool, ["a", "b"], x, meter)
    assert np.array_equal(out.data, np.tile([2.0, 2.0], (4, 1)))
    assert not out.requires_grad
    assert meter.teacher_forwards == 2
    assert np.array_equal(ensemble_logits(pool, ["a"], x).data, np.tile([1.0, 3.0], (4, 1)))


def test_ensemble_logits_permutation_exact(rng):
    pool = random_pool(5, spec=SPEC)
    x = rng.normal(size=(6, 3))
    ids = ["t3", "t0", "t4", "t1"]
    ref = ensemble_logits(pool, ids, x).data
    assert np.array_equal(ref, ensemble_logits(pool, ids[::-1], x).data)
    for perm in (rng.permutation(4) for _ in range(5)):
        assert np.array_equal(ref, ensemble_logits(pool, [ids[i] for i in perm], x).data)


def test_ensemble_logits_errors():
    pool = random_pool(2, spec=SPEC)
    with pytest.raises(KeyError):
        ensemble_logits(pool, ["zz"], np.zeros((1, 3)))
    with pytest.raises(ContractError):
        ensemble_logits(pool, [], np.zeros((1, 3)))


def test_per_step_cost():
    assert per_step_cost(TeacherStrategy.random_single(), 5) == 1
    assert per_step_cost(TeacherStrategy.greedy(4), 5) == 4
    assert per_step_cost(TeacherStrategy.random_subset(3), 5) == 3
    assert per_step_cost(TeacherStrategy.single_best(), 5) == 1
    assert per_step_cost(TeacherStrategy.single_by_id("x"), 5) == 1


def test_cost_meter_threads():
    meter = CostMeter()

    def bump():
        for _ in range(1000):
            meter.charge_teachers(1)
            meter.charge_student()

    threads = [threading.Thread(target=bump) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert meter.teacher_forwards == 4000 and meter.student_backwards == 4000
    assert meter.cost_units(0.5) == 4000 + 2000


def test_strategy_round_trip():
    for s in (TeacherStrategy.single_best(), TeacherStrategy.single_by_id("lr0.1_wd0"),
              TeacherStrategy.greedy(3), TeacherStrategy.random_subset(2), TeacherStrategy.random_single()):
        assert TeacherStrategy.from_dict(s.to_dict()) == s
    with pytest.raises(DomainError):
        TeacherStrategy("everyone")


def test_load_pool_from_registry(tmp_path):
    spec = MlpSpec(TINY_DATA.dim, (8,), TINY_DATA.num_classes)
    entries = []
    for seed in (0, 1):
        for i in range(2):
            rel = f"seed{seed}/t{i}.ckpt"
            save_checkpoint(init(spec.with_seed(10 * seed + i)), tmp_path / rel)
            entries.append({"id": f"t{i}", "seed": seed, "checkpoint": rel, "reported_accuracy": 0.5 + i / 10,
                            "status": "ok"})
    write_registry(tmp_path / "manifest.yaml", entries)
    pool = load_pool(tmp_path / "manifest.yaml", seed=1)
    assert pool.ids == ["t0", "t1"]
    assert checkpoint_bytes(pool["t1"].params) == checkpoint_bytes(init(spec.with_seed(11)))
    with pytest.raises(ContractError):
        load_pool(tmp_path / "manifest.yaml", seed=5)
