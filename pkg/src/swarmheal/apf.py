"""One-shot potential-field recovery planner driven by multi-hop damage.

Each remaining node gets a constant velocity at the split instant: a pull of
fixed length d_tr/2 toward the centroid of its k-hop destroyed neighbours,
plus a pull toward the centroid of all destroyed nodes. All velocities are
then scaled by one common factor so the fastest node flies at v_max.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DamageScenario, HopMatrix, Mdsg, SwarmConfig, Usnet, build_mdsg, compute_hops
from .errors import EmptyMdsg, NoDamage, NonTermination, StepBudgetExceeded
from .sim import RecoveryResult, constant_policy, simulate

DEFAULT_K = 3


@dataclass(frozen=True)
class ApfSolution:
    """Per-remaining-node terms, rows in `scenario.remaining` order.

    `mdsg_centroid` rows are NaN where the node has no destroyed neighbour
    within k hops; `alpha` is 0 wherever the differential term is dropped.
    """

    hop_k: int
    damage_centroid: np.ndarray
    mdsg_centroid: np.ndarray
    alpha: np.ndarray
    raw_velocity: np.ndarray
    scaled_velocity: np.ndarray
    scale: float


def mdsg_centroid(mdsg: Mdsg, usnet: Usnet) -> np.ndarray:
    if not mdsg.destroyed_neighbors:
        raise EmptyMdsg(f"node {mdsg.owner} has no destroyed node within {mdsg.hop_k} hops")
    return usnet.positions[list(mdsg.destroyed_neighbors)].mean(axis=0)


def damage_centroid(scenario: DamageScenario, usnet: Usnet) -> np.ndarray:
    if scenario.n_destroyed == 0:
        raise NoDamage("no destroyed nodes; nothing to recover")
    return usnet.positions[list(scenario.destroyed)].mean(axis=0)


def apf_velocities(
    scenario: DamageScenario,
    usnet: Usnet,
    hops: HopMatrix,
    k: int,
    v_max: float,
) -> ApfSolution:
    p_a = damage_centroid(scenario, usnet)
    d_tr = usnet.d_tr
    n_r = scenario.n_remaining
    centroids = np.full((n_r, 2), np.nan)
    alpha = np.zeros(n_r)
    raw = np.zeros((n_r, 2))
    for row, r in enumerate(scenario.remaining):
        p = usnet.positions[r]
        velocity = p_a - p
        try:
            p_d = mdsg_centroid(build_mdsg(scenario, hops, k, r), usnet)
        except EmptyMdsg:
            p_d = None
        if p_d is not None:
            centroids[row] = p_d
            gap = float(np.linalg.norm(p_d - p))
            # node sitting on its own differential centroid: direction undefined
            if gap > 0.0:
                alpha[row] = d_tr / (2.0 * gap)
                velocity = velocity + alpha[row] * (p_d - p)
        raw[row] = velocity
    peak = float(np.sqrt((raw ** 2).sum(axis=1)).max(initial=0.0))
    scale = v_max / peak if peak > 0 else 1.0
    return ApfSolution(
        hop_k=int(k),
        damage_centroid=p_a,
        mdsg_centroid=centroids,
        alpha=alpha,
        raw_velocity=raw,
        scaled_velocity=raw * scale,
        scale=scale,
    )


def apf_upper_bound(scenario: DamageScenario, usnet: Usnet, d_tr: float, v_max: float) -> float:
    """Worst-case recovery time: (max distance to the damage centroid + d_tr/2) / v_max."""
    p_a = damage_centroid(scenario, usnet)
    start = usnet.positions[list(scenario.remaining)]
    far = float(np.sqrt(((start - p_a) ** 2).sum(axis=1)).max(initial=0.0))
    return (far + d_tr / 2.0) / v_max


def apf_step_budget(bound_seconds: float, dt: float) -> int:
    return math.ceil(bound_seconds / dt - 1e-9) + 1


def apf_recover(
    usnet: Usnet,
    scenario: DamageScenario,
    config: SwarmConfig,
    k: int = DEFAULT_K,
    hops: HopMatrix | None = None,
    record_trajectories: bool = False,
) -> RecoveryResult:
    """Fly every remaining node at its constant scaled velocity until connected."""
    start = usnet.positions[list(scenario.remaining)]
    if scenario.n_destroyed == 0:
        return simulate(start, constant_policy(np.zeros_like(start)), config, max_steps=0,
                        record_trajectories=record_trajectories, algo_tag="apf", info={"k": k})
    hops = hops if hops is not None else compute_hops(usnet)
    solution = apf_velocities(scenario, usnet, hops, k, config.v_max)
    bound = apf_upper_bound(scenario, usnet, usnet.d_tr, config.v_max)
    try:
        return simulate(
            start,
            constant_policy(solution.scaled_velocity),
            config,
            max_steps=apf_step_budget(bound, config.dt),
            record_trajectories=record_trajectories,
            algo_tag="apf",
            info={"k": int(k), "upper_bound": bound},
        )
    except StepBudgetExceeded as exc:
        raise NonTermination(f"potential-field recovery overran its {bound:.3f} s bound") from exc
