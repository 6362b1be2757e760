"""Evaluation metrics for recovered swarms.

Coverage convention: the area covered by a swarm is the union of disks of
radius d_tr/2 around its nodes, rasterized over the deployment area. Two
points inside such disks around linked nodes can always reach each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DamageScenario, RemainedGraph, Usnet, count_subnets_unionfind
from .sim import RecoveryResult

DEFAULT_CELL = 2.0


def covered_cells(positions: np.ndarray, radius: float, width: float, height: float, cell: float) -> int:
    """Number of grid cells (centers at (i+1/2)*cell) inside the union of disks."""
    nx = int(np.ceil(width / cell))
    ny = int(np.ceil(height / cell))
    grid = np.zeros((nx, ny), dtype=bool)
    xs = (np.arange(nx) + 0.5) * cell
    ys = (np.arange(ny) + 0.5) * cell
    r2 = radius * radius
    for px, py in np.asarray(positions, dtype=np.float64):
        i0 = max(int(np.floor((px - radius) / cell)), 0)
        i1 = min(int(np.ceil((px + radius) / cell)) + 1, nx)
        j0 = max(int(np.floor((py - radius) / cell)), 0)
        j1 = min(int(np.ceil((py + radius) / cell)) + 1, ny)
        if i0 >= i1 or j0 >= j1:
            continue
        dx = xs[i0:i1, None] - px
        dy = ys[None, j0:j1] - py
        grid[i0:i1, j0:j1] |= dx * dx + dy * dy <= r2
    return int(grid.sum())


def coverage_ratio(
    final_positions: np.ndarray,
    original_positions: np.ndarray,
    d_tr: float,
    width: float,
    height: float,
    cell: float = DEFAULT_CELL,
) -> float:
    radius = d_tr / 2.0
    original = covered_cells(original_positions, radius, width, height, cell)
    if original == 0:
        raise ValueError("original swarm covers no grid cell")
    return covered_cells(final_positions, radius, width, height, cell) / original


def degree_cdf(remained: RemainedGraph | np.ndarray) -> list[tuple[int, float]]:
    """[(d, fraction of nodes with degree <= d) for d = 0..max degree]."""
    adjacency = remained.adjacency if isinstance(remained, RemainedGraph) else np.asarray(remained)
    degrees = np.asarray(adjacency, dtype=np.int64).sum(axis=1)
    n = degrees.size
    if n == 0:
        return [(0, 1.0)]
    counts = np.bincount(degrees)
    cumulative = np.cumsum(counts)
    return [(d, float(c) / n) for d, c in enumerate(cumulative)]


@dataclass(frozen=True)
class MetricsReport:
    recovery_time: float
    coverage_ratio: float
    degree_cdf: tuple[tuple[int, float], ...]
    final_subnets: int


def recovery_summary(
    result: RecoveryResult,
    usnet: Usnet,
    scenario: DamageScenario,
    width: float,
    height: float,
    cell: float = DEFAULT_CELL,
) -> MetricsReport:
    final = RemainedGraph.from_positions(result.final_positions, usnet.d_tr)
    return MetricsReport(
        recovery_time=float(result.t_rc),
        coverage_ratio=coverage_ratio(result.final_positions, usnet.positions, usnet.d_tr, width, height, cell),
        degree_cdf=tuple(degree_cdf(final)),
        final_subnets=count_subnets_unionfind(final.adjacency),
    )
