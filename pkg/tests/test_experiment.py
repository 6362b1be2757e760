import pytest

from swarmheal.errors import NonTermination, ValidationError
from swarmheal.experiment import (
    ALGORITHMS,
    DESK_CONFIG,
    ExperimentPlan,
    desk_plan,
    paper_plan,
    parse_scenario_id,
    register_algorithm,
    run_experiment,
    run_seed,
    scenario_id,
)


def small_plan(tmp_path, **kw):
    base = dict(base_config=DESK_CONFIG, damage_sizes=(15, 30), repeats=3, algorithms=("apf", "centering"),
                seed_base=0, output_dir=tmp_path)
    base.update(kw)
    return ExperimentPlan(**base)


def test_seed_derivation():
    assert run_seed(0, 15, 2) == run_seed(0, 15, 2)
    seeds = {run_seed(0, nd, rep) for nd in (15, 30, 45) for rep in range(10)}
    assert len(seeds) == 30
    assert run_seed(1, 15, 2) != run_seed(0, 15, 2)


def test_scenario_id_round_trip():
    assert scenario_id(15, 3) == "nd015-r003"
    assert parse_scenario_id("nd015-r003") == (15, 3)


def test_plan_validation(tmp_path):
    with pytest.raises(ValidationError):
        small_plan(tmp_path, repeats=0)
    with pytest.raises(ValidationError):
        small_plan(tmp_path, damage_sizes=(60,))
    with pytest.raises(ValidationError):
        small_plan(tmp_path, algorithms=("nope",))


def test_default_plans(tmp_path):
    desk = desk_plan(tmp_path)
    assert desk.damage_sizes == (15, 30, 45) and desk.repeats == 10 and desk.base_config.n_total == 60
    paper = paper_plan(tmp_path)
    assert paper.damage_sizes == tuple(range(10, 200, 10)) and paper.repeats == 50


def test_counting_and_resume(tmp_path):
    plan = small_plan(tmp_path)
    report = run_experiment(plan, workers=1)
    assert report.computed == 12 and report.skipped == 0 and not report.failures
    runs = (tmp_path / "runs.csv").read_text().splitlines()
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(runs) == 1 + 12 and len(summary) == 1 + 4
    assert all(line.endswith(",1") for line in runs[1:])
    before = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    again = run_experiment(plan, workers=1)
    assert again.computed == 0 and again.skipped == 12
    assert {p.name: p.read_bytes() for p in tmp_path.iterdir()} == before


def test_resume_after_partial_run(tmp_path):
    full_dir, part_dir = tmp_path / "full", tmp_path / "part"
    run_experiment(small_plan(full_dir), workers=1)
    run_experiment(small_plan(part_dir, damage_sizes=(30,)), workers=1)
    report = run_experiment(small_plan(part_dir), workers=1)
    assert report.computed == 6 and report.skipped == 6
    for name in ("runs.csv", "cdf.csv", "summary.csv"):
        assert (full_dir / name).read_bytes() == (part_dir / name).read_bytes()


def test_parallel_matches_serial(tmp_path):
    serial, parallel = tmp_path / "s", tmp_path / "p"
    run_experiment(small_plan(serial, repeats=2), workers=1)
    run_experiment(small_plan(parallel, repeats=2), workers=2)
    for name in ("runs.csv", "cdf.csv", "summary.csv"):
        assert (serial / name).read_bytes() == (parallel / name).read_bytes()


def test_failed_cells_are_reported(tmp_path):
    def broken(usnet, scenario, config, options):
        raise NonTermination("boom")

    register_algorithm("broken", broken)
    try:
        report = run_experiment(small_plan(tmp_path, algorithms=("apf", "broken"), repeats=1), workers=1)
    finally:
        ALGORITHMS.pop("broken")
    assert len(report.failures) == 2 and report.computed == 2
    assert "NonTermination" in (tmp_path / "failures.csv").read_text()
