"""JSON/CSV persistence for scenarios, recovery results and adjacency exports."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import DamageScenario, SwarmConfig, Usnet, generate_usnet, random_damage
from .errors import FormatError, ValidationError

SCENARIO_SCHEMA = 1
RESULT_SCHEMA = 1


def damage_rng(seed: int) -> np.random.Generator:
    """Damage draws use a stream separate from the layout stream of the same seed."""
    return np.random.default_rng([seed, 0xDA])


def make_scenario(config: SwarmConfig, n_destroyed: int) -> tuple[Usnet, DamageScenario]:
    usnet = generate_usnet(config)
    return usnet, random_damage(config.n_total, n_destroyed, damage_rng(config.rng_seed))


def config_to_dict(config: SwarmConfig) -> dict:
    return {
        "n_total": config.n_total,
        "area": [config.area_width, config.area_height],
        "d_tr": config.d_tr,
        "v_max": config.v_max,
        "dt": config.dt,
    }


def config_from_dict(data: dict, seed: int) -> SwarmConfig:
    try:
        width, height = data["area"]
        return SwarmConfig(
            n_total=int(data["n_total"]),
            area_width=float(width),
            area_height=float(height),
            d_tr=float(data["d_tr"]),
            v_max=float(data["v_max"]),
            dt=float(data["dt"]),
            rng_seed=int(seed),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad config block: {exc}") from exc


def scenario_to_dict(config: SwarmConfig, usnet: Usnet, scenario: DamageScenario) -> dict:
    return {
        "schema_version": SCENARIO_SCHEMA,
        "seed": config.rng_seed,
        "config": config_to_dict(config),
        "positions": usnet.positions.tolist(),
        "destroyed": list(scenario.destroyed),
    }


def scenario_from_dict(data: dict) -> tuple[SwarmConfig, Usnet, DamageScenario]:
    version = data.get("schema_version")
    if version != SCENARIO_SCHEMA:
        raise FormatError(f"unsupported scenario schema version {version!r}")
    config = config_from_dict(data.get("config", {}), data.get("seed", 0))
    if "positions" in data:
        positions = np.asarray(data["positions"], dtype=np.float64)
        if positions.shape != (config.n_total, 2):
            raise FormatError(f"positions shape {positions.shape} does not match n_total={config.n_total}")
        usnet = Usnet.from_positions(positions, config.d_tr)
    else:
        usnet = generate_usnet(config)
    try:
        scenario = DamageScenario.from_destroyed(config.n_total, data["destroyed"])
    except KeyError as exc:
        raise FormatError("scenario has no 'destroyed' list") from exc
    return config, usnet, scenario


def write_json(data: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_scenario(path: str | Path, config: SwarmConfig, usnet: Usnet, scenario: DamageScenario) -> None:
    write_json(scenario_to_dict(config, usnet, scenario), path)


def load_scenario(path: str | Path) -> tuple[SwarmConfig, Usnet, DamageScenario]:
    try:
        return scenario_from_dict(read_json(path))
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_adjacency_csv(adjacency: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(np.asarray(adjacency, dtype=int).tolist())


def result_to_dict(result, scenario_seed: int, metrics=None, trajectory_file: str | None = None) -> dict:
    data = {
        "schema_version": RESULT_SCHEMA,
        "algo": result.algo_tag,
        "scenario_seed": scenario_seed,
        "t_r_seconds": result.t_rc,
        "steps": result.steps,
        "ns_series": list(result.ns_series),
        "final_positions": np.asarray(result.final_positions).tolist(),
        "trajectory_file": trajectory_file,
    }
    for key, value in result.info.items():
        data[key] = value.item() if isinstance(value, np.generic) else value
    if metrics is not None:
        data["metrics"] = {
            "recovery_time": metrics.recovery_time,
            "coverage_ratio": metrics.coverage_ratio,
            "final_subnets": metrics.final_subnets,
            "degree_cdf": [list(p) for p in metrics.degree_cdf],
        }
    return data


def load_result(path: str | Path) -> dict:
    data = read_json(path)
    if data.get("schema_version") != RESULT_SCHEMA:
        raise FormatError(f"unsupported result schema version {data.get('schema_version')!r}")
    return data
