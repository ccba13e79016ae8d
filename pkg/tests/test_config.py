from pathlib import Path

import pytest

from distillbench.config import ExperimentPlan, load_plan, parse_plan
from distillbench.errors import ConfigError
from distillbench.fsutil import derive_seed

DATA = Path(__file__).parent / "data"
REFERENCE = Path(__file__).parents[1] / "configs" / "reference.yaml"


@pytest.mark.parametrize("path", [DATA / "tiny_plan.yaml", REFERENCE])
def test_round_trip(path):
    plan = load_plan(path)
    again = parse_plan(plan.to_yaml())
    assert again == plan
    assert again.to_dict() == plan.to_dict()


def test_reference_plan_shape():
    plan = load_plan(REFERENCE)
    assert plan.seeds == (0, 1, 2)
    assert plan.data.num_classes == 10 and plan.data.dim == 16 and plan.data.label_noise == 0.2
    assert plan.hidden_widths == (128, 128)
    assert plan.training.total_steps == 2000 and plan.training.batch_size == 64
    assert len(plan.teacher_grid) == 4


def test_student_jobs_expand_and_rescale():
    plan = load_plan(DATA / "tiny_plan.yaml")
    jobs = plan.student_jobs(0, ["a", "b"])
    keys = [j.key for j in jobs]
    assert keys == ["baseline__d0.5__s0", "baseline__d1__s0", "best_single__d0.5__s0", "best_single__d1__s0",
                    "random_early__d1__s0", "each-a__d1__s0", "each-b__d1__s0"]
    half = jobs[0].run
    assert half.total_steps == 30 and half.lr.total_steps == 30
    assert jobs[-1].run.distill.teacher_strategy.teacher_id == "b"
    # every student of a seed shares init and data order
    assert len({(j.run.run_seed, j.run.model.init_seed) for j in jobs}) == 1


def test_seed_splitting_is_keyed():
    assert derive_seed(0, "student") == derive_seed(0, "student")
    assert derive_seed(0, "student") != derive_seed(1, "student")
    assert derive_seed(0, "student") != derive_seed(0, "teachers")
    assert 0 <= derive_seed("x") < 2**64


def test_overrides():
    plan = load_plan(DATA / "tiny_plan.yaml").with_overrides(output_dir="/tmp/x", jobs=3, seed_offset=10)
    assert plan.output_dir == "/tmp/x" and plan.jobs == 3 and plan.seeds == (10, 11)


def test_yaml_syntax_error_reports_position():
    with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
        parse_plan("schema_version: 1\nname: [oops\n")


@pytest.mark.parametrize("mutate, needle", [
    (lambda d: d.pop("dataset"), "dataset"),
    (lambda d: d.__setitem__("schema_version", 99), "schema_version"),
    (lambda d: d["variants"].pop(0), "baseline"),
    (lambda d: d["variants"][0].__setitem__("durations", [0.0]), "durations"),
    (lambda d: d["dataset"].__setitem__("label_noise", 0.9), "dataset"),
    (lambda d: d["variants"][1]["distill"].__setitem__("loss_kind", "l1"), "variants"),
])
def test_config_errors_name_the_field(mutate, needle):
    d = load_plan(DATA / "tiny_plan.yaml").to_dict()
    mutate(d)
    with pytest.raises(ConfigError, match=needle):
        ExperimentPlan.from_dict(d)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_plan(DATA / "nope.yaml")
