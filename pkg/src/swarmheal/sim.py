"""Time-stepped kinematic replay of velocity policies with connectivity
monitoring, plus the direct-centering baseline."""

from __future__ import annotations

import csv
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DamageScenario, SwarmConfig, Usnet, build_adjacency, count_subnets_unionfind
from .errors import PolicySpeedViolation, StepBudgetExceeded

SPEED_SLACK = 1e-9

# policy(step_index, positions) -> (N_R, 2) velocities in m/s
Policy = Callable[[int, np.ndarray], np.ndarray]
StopPredicate = Callable[[np.ndarray, int], bool]


@dataclass(frozen=True)
class RecoveryResult:
    t_rc: float
    steps: int
    ns_series: tuple[int, ...]
    final_positions: np.ndarray
    algo_tag: str
    trajectories: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def final_subnets(self) -> int:
        return self.ns_series[-1]


def connected_stop(positions: np.ndarray, n_subnets: int) -> bool:
    return n_subnets == 1


def simulate(
    start_positions: np.ndarray,
    policy: Policy,
    config: SwarmConfig,
    stop: StopPredicate = connected_stop,
    max_steps: int = 100_000,
    record_trajectories: bool = False,
    algo_tag: str = "",
    info: dict | None = None,
) -> RecoveryResult:
    """Euler-integrate `policy` from `start_positions`.

    `stop` is evaluated on the start positions and after every position
    update; the sub-net count it receives comes from union-find on the
    disk graph. Exceeding `max_steps` raises StepBudgetExceeded.
    """
    pos = np.array(start_positions, dtype=np.float64)
    d_tr, v_max, dt = config.d_tr, config.v_max, config.dt
    ns = count_subnets_unionfind(build_adjacency(pos, d_tr))
    series = [ns]
    frames = [pos.copy()] if record_trajectories else None
    step = 0
    while not stop(pos, ns):
        if step >= max_steps:
            raise StepBudgetExceeded(f"{algo_tag or 'simulation'} exceeded {max_steps} steps")
        vel = np.asarray(policy(step, pos), dtype=np.float64)
        if vel.shape != pos.shape:
            raise ValueError(f"policy returned shape {vel.shape}, expected {pos.shape}")
        speeds = np.sqrt((vel ** 2).sum(axis=1))
        if speeds.size and speeds.max() > v_max + SPEED_SLACK:
            raise PolicySpeedViolation(f"speed {speeds.max():.12g} exceeds v_max={v_max} at step {step}")
        pos = pos + dt * vel
        step += 1
        ns = count_subnets_unionfind(build_adjacency(pos, d_tr))
        series.append(ns)
        if frames is not None:
            frames.append(pos.copy())
    return RecoveryResult(
        t_rc=step * dt,
        steps=step,
        ns_series=tuple(series),
        final_positions=pos,
        algo_tag=algo_tag,
        trajectories=np.stack(frames) if frames is not None else None,
        info=dict(info or {}),
    )


def constant_policy(velocities: np.ndarray) -> Policy:
    velocities = np.array(velocities, dtype=np.float64)
    velocities.setflags(write=False)
    return lambda step, positions: velocities


class TargetPolicy:
    """Fly straight at full speed toward fixed targets, then hover.

    A node closer than v_max*dt to its target gets exactly the velocity that
    lands it on the target, so it never oscillates around it.
    """

    def __init__(self, targets: np.ndarray, v_max: float, dt: float):
        self.targets = np.array(targets, dtype=np.float64)
        self.v_max = v_max
        self.dt = dt

    def __call__(self, step: int, positions: np.ndarray) -> np.ndarray:
        delta = self.targets - positions
        dist = np.sqrt((delta ** 2).sum(axis=1))
        vel = np.zeros_like(delta)
        moving = dist > 1e-9
        reach = self.v_max * self.dt
        far = moving & (dist > reach)
        vel[far] = delta[far] / dist[far, None] * self.v_max
        near = moving & ~far
        vel[near] = delta[near] / self.dt
        return vel

    def arrived(self, positions: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(np.sqrt(((self.targets - positions) ** 2).sum(axis=1)) <= tol))

    def arrival_steps(self, start: np.ndarray) -> np.ndarray:
        dist = np.sqrt(((self.targets - np.asarray(start)) ** 2).sum(axis=1))
        return np.ceil(dist / (self.v_max * self.dt) - 1e-9).astype(np.int64)


def target_step_budget(start: np.ndarray, targets: np.ndarray, config: SwarmConfig, margin: float = 0.10) -> int:
    """Arrival bound for a TargetPolicy run, plus `margin` and two steps."""
    dist = np.sqrt(((np.asarray(targets) - np.asarray(start)) ** 2).sum(axis=1))
    steps = math.ceil(float(dist.max(initial=0.0)) / (config.v_max * config.dt))
    return int(math.ceil(steps * (1 + margin))) + 2


def centering_targets(start: np.ndarray, d_tr: float) -> np.ndarray:
    """Nearest point of the radius-d_tr/2 disk around the start centroid."""
    start = np.asarray(start, dtype=np.float64)
    center = start.mean(axis=0)
    offset = start - center
    dist = np.sqrt((offset ** 2).sum(axis=1))
    radius = d_tr / 2
    targets = start.copy()
    outside = dist > radius
    targets[outside] = center + offset[outside] / dist[outside, None] * radius
    return targets


def centering_baseline(
    usnet: Usnet,
    scenario: DamageScenario,
    config: SwarmConfig,
    record_trajectories: bool = False,
) -> RecoveryResult:
    start = usnet.positions[list(scenario.remaining)]
    targets = centering_targets(start, config.d_tr)
    policy = TargetPolicy(targets, config.v_max, config.dt)
    return simulate(
        start,
        policy,
        config,
        max_steps=target_step_budget(start, targets, config),
        record_trajectories=record_trajectories,
        algo_tag="centering",
    )


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def write_trajectories_csv(result: RecoveryResult, node_ids: Sequence[int], path: str | Path) -> None:
    if result.trajectories is None:
        raise ValueError("result was simulated without trajectory recording")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "node_id", "x", "y"])
        for step, frame in enumerate(result.trajectories):
            for node, (x, y) in zip(node_ids, frame):
                writer.writerow([step, node, repr(float(x)), repr(float(y))])


def render_svg(
    start: np.ndarray,
    final: np.ndarray,
    d_tr: float,
    width: float,
    height: float,
    trajectories: np.ndarray | None = None,
    destroyed: np.ndarray | None = None,
    px: int = 800,
) -> str:
    """Case-study figure: destroyed nodes, start/final positions, paths and range disks."""
    s = px / max(width, height)

    def xy(p):
        return f"{p[0] * s:.2f}", f"{(height - p[1]) * s:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width * s:.0f}" height="{height * s:.0f}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for p in np.asarray(final):
        x, y = xy(p)
        parts.append(f'<circle cx="{x}" cy="{y}" r="{d_tr / 2 * s:.2f}" fill="#4a90d9" fill-opacity="0.06"/>')
    if trajectories is not None:
        for node in range(trajectories.shape[1]):
            pts = " ".join(",".join(xy(p)) for p in trajectories[:, node, :])
            parts.append(f'<polyline points="{pts}" fill="none" stroke="#999" stroke-width="1"/>')
    if destroyed is not None:
        for p in np.asarray(destroyed):
            x, y = xy(p)
            parts.append(f'<circle cx="{x}" cy="{y}" r="2.5" fill="#d0021b"/>')
    for p in np.asarray(start):
        x, y = xy(p)
        parts.append(f'<circle cx="{x}" cy="{y}" r="2.5" fill="none" stroke="#333"/>')
    for p in np.asarray(final):
        x, y = xy(p)
        parts.append(f'<circle cx="{x}" cy="{y}" r="3" fill="#1f5fa8"/>')
    parts.append("</svg>")
    return "\n".join(parts)
