import numpy as np
import pytest

from distillbench.autodiff import Tensor
from distillbench.models import MlpSpec, ModelParams, init
from distillbench.optim import OptimizerConfig
from distillbench.schedules import LrSchedule
from distillbench.teachers import Teacher, TeacherPool
from distillbench.trainer import DataConfig, RunConfig

TINY_DATA = DataConfig(num_classes=4, dim=6, separation=2.0, label_noise=0.1, seed=3, n_train=256, n_val=128)


def tiny_run(total_steps=100, **kw) -> RunConfig:
    """A seconds-fast run on a 4-class task; keyword args override RunConfig fields."""
    base = dict(
        data=TINY_DATA,
        model=MlpSpec(TINY_DATA.dim, (16,), TINY_DATA.num_classes, init_seed=5),
        optimizer=OptimizerConfig("sgdw", weight_decay=1e-4, momentum=0.9),
        lr=LrSchedule("cosine", base_lr=0.05, warmup_fraction=0.1, total_steps=total_steps),
        total_steps=total_steps,
        batch_size=32,
        eval_every=max(total_steps // 5, 1),
        run_seed=17,
    )
    base.update(kw)
    return RunConfig(**base)


def random_pool(n=5, spec=None, seed=0, accuracies=None) -> TeacherPool:
    """Untrained teachers with distinct weights; cheap stand-ins for a sweep."""
    spec = spec or MlpSpec(TINY_DATA.dim, (16,), TINY_DATA.num_classes)
    accuracies = accuracies or [0.5 + 0.05 * i for i in range(n)]
    teachers = [Teacher(f"t{i}", init(spec.with_seed(100 + i)), accuracies[i]) for i in range(n)]
    return TeacherPool(teachers, rng_seed=seed)


def constant_teacher(spec: MlpSpec, logits, tid: str, acc: float = 0.5) -> Teacher:
    """A teacher whose output is ``logits`` for every input (zero weights, bias = logits)."""
    tensors = {k: Tensor(np.zeros_like(v)) for k, v in init(spec).arrays().items()}
    tensors[f"b{len(spec.hidden_widths)}"] = Tensor(np.asarray(logits, dtype=float))
    return Teacher(tid, ModelParams(spec, tensors, frozen=True), acc)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def dominance_oracle(points) -> list[bool]:
    """Quadratic scan: dominated iff some other point is no worse on both axes and better on one."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    flags = []
    for r, q in pts:
        no_worse = (pts[:, 0] <= r) & (pts[:, 1] >= q)
        better = (pts[:, 0] < r) | (pts[:, 1] > q)
        flags.append(bool(np.any(no_worse & better)))
    return flags


# Worked example: the baseline reaches its final accuracy (76.6%) after 179.8
# minutes and the distilled student gets there in 91.6.
REF_BASELINE_MIN = 179.8
REF_CANDIDATE_MIN = 91.6
REF_SLOW_CANDIDATE_MIN = 200.0
REF_FINAL_ACC = 0.766


def ref_curves(candidate_minutes):
    from distillbench.efficiency import QualityCurve
    baseline = QualityCurve(((30.0, 0.40), (90.0, 0.70), (150.0, 0.75), (REF_BASELINE_MIN, REF_FINAL_ACC)))
    candidate = QualityCurve(((30.0, 0.50), (60.0, 0.72), (candidate_minutes - 1.0, 0.765),
                              (candidate_minutes, REF_FINAL_ACC), (candidate_minutes + 20.0, 0.770)))
    return baseline, candidate


# acceptance summary: one line per criterion, printed after the run
ACCEPTANCE: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
