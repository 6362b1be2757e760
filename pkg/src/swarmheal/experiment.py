"""Batch experiments over damage sizes, with seeded, resumable CSV output."""

from __future__ import annotations

import csv
import logging
import os
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .apf import DEFAULT_K, apf_recover
from .core import DamageScenario, SwarmConfig, Usnet
from .errors import SwarmError, ValidationError
from .gcn import DESK_PROFILE, GcnModel, TrainConfig, build_problem, gc_recover, init_model, load_model, pretrain
from .io import make_scenario
from .metrics import recovery_summary
from .sim import RecoveryResult, centering_baseline

log = logging.getLogger(__name__)

WORKERS_ENV = "SWARMHEAL_WORKERS"

PAPER_CONFIG = SwarmConfig(n_total=200, area_width=1000.0, area_height=1000.0, d_tr=120.0, v_max=10.0, dt=0.1)
# 60 nodes at the paper's node density: 1000 * sqrt(60 / 200) ~= 550 m
DESK_CONFIG = replace(PAPER_CONFIG, n_total=60, area_width=550.0, area_height=550.0)

# Layout seed (paper-scale config, 100 destroyed) whose split leaves 7 sub-nets.
CASE_STUDY_SEED = 383
CASE_STUDY_DESTROYED = 100

RUN_FIELDS = ("scenario_id", "algo", "k_or_kstar", "t_rc", "coverage_ratio", "final_subnets")
SUMMARY_FIELDS = ("n_d", "algo", "runs", "t_rc_mean", "t_rc_std", "coverage_mean", "coverage_std",
                  "connected_fraction")
CDF_FIELDS = ("scenario_id", "algo", "d", "P_d")


def run_seed(seed_base: int, n_destroyed: int, repeat: int) -> int:
    """Per-run seed that depends only on (seed_base, N_D, repeat)."""
    return int(np.random.SeedSequence([seed_base, n_destroyed, repeat]).generate_state(1)[0])


def scenario_id(n_destroyed: int, repeat: int) -> str:
    return f"nd{n_destroyed:03d}-r{repeat:03d}"


def parse_scenario_id(sid: str) -> tuple[int, int]:
    nd, rep = sid.split("-")
    return int(nd[2:]), int(rep[1:])


# ---------------------------------------------------------------------------
# algorithm registry
# ---------------------------------------------------------------------------

# fn(usnet, scenario, config, options) -> RecoveryResult
Algorithm = Callable[[Usnet, DamageScenario, SwarmConfig, dict], RecoveryResult]
ALGORITHMS: dict[str, Algorithm] = {}


def register_algorithm(name: str, fn: Algorithm) -> None:
    """Expose a planner to the harness; external baselines plug in here."""
    ALGORITHMS[name] = fn


def _run_apf(usnet, scenario, config, options):
    return apf_recover(usnet, scenario, config, k=options.get("k", DEFAULT_K))


def _run_centering(usnet, scenario, config, options):
    return centering_baseline(usnet, scenario, config)


def _run_gc(usnet, scenario, config, options):
    model = options.get("model")
    if model is None:
        path = options.get("pretrained")
        model = load_model(path) if path else bundled_model()
    train_config = TrainConfig(max_epochs=options.get("epochs", 200), rng_seed=options.get("train_seed", 0))
    result, _, _ = gc_recover(usnet, scenario, config, model, train_config)
    return result


register_algorithm("apf", _run_apf)
register_algorithm("centering", _run_centering)
register_algorithm("gc", _run_gc)


def k_label(result: RecoveryResult) -> str:
    if "k" in result.info:
        return str(result.info["k"])
    if "k_star" in result.info:
        k = result.info["k_star"]
        return "fallback" if k is None else str(k)
    return ""


# ---------------------------------------------------------------------------
# pretrained weights
# ---------------------------------------------------------------------------

BUNDLED_MODEL = "desk_l4_d64.bin"
PRETRAIN_SCENARIOS = 40
PRETRAIN_EPOCHS = 300
PRETRAIN_LR = 1e-3


def bundled_model() -> GcnModel:
    """Desk-profile weights shipped with the package (see `pretrain_desk_model`)."""
    with resources.as_file(resources.files("swarmheal") / "data" / BUNDLED_MODEL) as path:
        return load_model(path)


def desk_pretraining_set(count: int = PRETRAIN_SCENARIOS, config: SwarmConfig = DESK_CONFIG):
    """Scenarios for pretraining, seeded apart from every acceptance seed range."""
    sizes = [config.n_total // 4, config.n_total // 2, 3 * config.n_total // 4]
    out = []
    for s in range(count):
        usnet, scenario = make_scenario(replace(config, rng_seed=50_000 + s), sizes[s % 3])
        out.append((usnet, scenario))
    return out


def pretrain_on(pairs, config: SwarmConfig, epochs: int = PRETRAIN_EPOCHS, lr: float = PRETRAIN_LR,
                num_layers: int = DESK_PROFILE["num_layers"], hidden_dim: int = DESK_PROFILE["hidden_dim"],
                seed: int = 0, log_fn=None) -> GcnModel:
    problems = [build_problem(u, s, config) for u, s in pairs]
    model = init_model(num_layers, hidden_dim, seed=seed, coordinate_scale=config.area_width)
    return pretrain(model, problems, epochs, TrainConfig(learning_rate=lr, rng_seed=seed), log=log_fn)


def pretrain_desk_model(log_fn=None) -> GcnModel:
    """Regenerates the bundled desk model bit-for-bit."""
    return pretrain_on(desk_pretraining_set(), DESK_CONFIG, log_fn=log_fn)


# ---------------------------------------------------------------------------
# plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentPlan:
    base_config: SwarmConfig
    damage_sizes: tuple[int, ...]
    repeats: int
    algorithms: tuple[str, ...]
    seed_base: int
    output_dir: Path
    options: dict = field(default_factory=dict)
    coverage_cell: float = 2.0

    def __post_init__(self):
        if self.repeats < 1:
            raise ValidationError("repeats must be >= 1")
        for nd in self.damage_sizes:
            if not 0 <= nd < self.base_config.n_total:
                raise ValidationError(f"damage size {nd} must be in [0, N)")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ValidationError(f"unknown algorithms: {unknown}")

    def cells(self):
        for nd in self.damage_sizes:
            for rep in range(self.repeats):
                for algo in self.algorithms:
                    yield nd, rep, algo


def desk_plan(output_dir, seed_base: int = 0, algorithms=("apf", "centering"), repeats: int = 10) -> ExperimentPlan:
    return ExperimentPlan(DESK_CONFIG, (15, 30, 45), repeats, tuple(algorithms), seed_base, Path(output_dir))


def paper_plan(output_dir, seed_base: int = 0, algorithms=("apf", "centering"), repeats: int = 50) -> ExperimentPlan:
    return ExperimentPlan(PAPER_CONFIG, tuple(range(10, 200, 10)), repeats, tuple(algorithms), seed_base,
                          Path(output_dir))


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def run_cell(plan: ExperimentPlan, n_destroyed: int, repeat: int, algo: str):
    """One (N_D, repeat, algo) run. Returns (run row, cdf rows)."""
    seed = run_seed(plan.seed_base, n_destroyed, repeat)
    config = replace(plan.base_config, rng_seed=seed)
    usnet, scenario = make_scenario(config, n_destroyed)
    result = ALGORITHMS[algo](usnet, scenario, config, plan.options)
    report = recovery_summary(result, usnet, scenario, config.area_width, config.area_height, plan.coverage_cell)
    sid = scenario_id(n_destroyed, repeat)
    row = {
        "scenario_id": sid,
        "algo": algo,
        "k_or_kstar": k_label(result),
        "t_rc": _fmt(result.t_rc),
        "coverage_ratio": _fmt(report.coverage_ratio),
        "final_subnets": str(report.final_subnets),
    }
    cdf = [{"scenario_id": sid, "algo": algo, "d": str(d), "P_d": _fmt(p)} for d, p in report.degree_cdf]
    return row, cdf


def _run_cell_safe(args):
    plan, nd, rep, algo = args
    try:
        return (nd, rep, algo), run_cell(plan, nd, rep, algo), None
    except SwarmError as exc:
        return (nd, rep, algo), None, f"{type(exc).__name__}: {exc}"


def _read_rows(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write_rows(path: Path, fields, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _sort_key(row):
    nd, rep = parse_scenario_id(row["scenario_id"])
    return nd, rep, row["algo"], int(row.get("d", 0))


def summarize(rows: list[dict]) -> list[dict]:
    groups: dict[tuple[int, str], list[dict]] = {}
    for row in rows:
        nd, _ = parse_scenario_id(row["scenario_id"])
        groups.setdefault((nd, row["algo"]), []).append(row)
    out = []
    for (nd, algo), group in sorted(groups.items()):
        t = np.array([float(r["t_rc"]) for r in group])
        cov = np.array([float(r["coverage_ratio"]) for r in group])
        conn = np.array([int(r["final_subnets"]) == 1 for r in group])
        out.append({
            "n_d": str(nd),
            "algo": algo,
            "runs": str(len(group)),
            "t_rc_mean": _fmt(t.mean()),
            "t_rc_std": _fmt(t.std()),
            "coverage_mean": _fmt(cov.mean()),
            "coverage_std": _fmt(cov.std()),
            "connected_fraction": _fmt(conn.mean()),
        })
    return out


@dataclass
class ExperimentReport:
    computed: int
    skipped: int
    failures: list[tuple[tuple[int, int, str], str]]
    summary: list[dict]


def run_experiment(plan: ExperimentPlan, workers: int | None = None) -> ExperimentReport:
    """Run every missing cell of `plan`, then rewrite runs.csv, cdf.csv and summary.csv sorted.

    Cells already present in runs.csv are skipped, so an interrupted or
    completed directory can be rerun safely.
    """
    out = Path(plan.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs_path, cdf_path = out / "runs.csv", out / "cdf.csv"
    rows = _read_rows(runs_path)
    cdf_rows = _read_rows(cdf_path)
    done = {(r["scenario_id"], r["algo"]) for r in rows}
    todo = [(nd, rep, algo) for nd, rep, algo in plan.cells() if (scenario_id(nd, rep), algo) not in done]
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))

    failures = []
    jobs = [(plan, nd, rep, algo) for nd, rep, algo in todo]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_safe, jobs))
    else:
        results = map(_run_cell_safe, jobs)
    for cell, payload, error in results:
        if error is not None:
            log.warning("cell %s failed: %s", cell, error)
            failures.append((cell, error))
            continue
        row, cdf = payload
        rows.append(row)
        cdf_rows.extend(cdf)
        # checkpoint so an interrupted run resumes from here
        with open(runs_path, "a" if runs_path.exists() else "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=RUN_FIELDS, lineterminator="\n")
            if fh.tell() == 0:
                writer.writeheader()
            writer.writerow(row)

    rows.sort(key=_sort_key)
    cdf_rows.sort(key=_sort_key)
    _write_rows(runs_path, RUN_FIELDS, rows)
    _write_rows(cdf_path, CDF_FIELDS, cdf_rows)
    summary = summarize(rows)
    _write_rows(out / "summary.csv", SUMMARY_FIELDS, summary)
    if failures:
        _write_rows(out / "failures.csv", ("n_d", "repeat", "algo", "error"),
                    [{"n_d": c[0], "repeat": c[1], "algo": c[2], "error": e} for c, e in failures])
    elif (out / "failures.csv").exists():
        (out / "failures.csv").unlink()
    skipped = sum(1 for _ in plan.cells()) - len(todo)
    return ExperimentReport(len(todo) - len(failures), skipped, failures, summary)
