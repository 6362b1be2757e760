"""Bipartite graph convolution (I - eps*L) on united differential graphs,
its iteration and fixed point, and diagonal batching over hop counts."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .core import UnitedMdsg, component_labels, infinity_norm
from .errors import InconsistentOrder, ShapeMismatch, ValidationError


@dataclass(frozen=True)
class BipartiteKernel:
    laplacian: np.ndarray
    epsilon: float
    operator: np.ndarray

    @classmethod
    def from_laplacian(cls, lap: np.ndarray, epsilon: float) -> "BipartiteKernel":
        lap = np.asarray(lap, dtype=np.float64)
        adjacency_norm = float(np.diag(lap).max()) if lap.size else 0.0
        if not epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {epsilon}")
        # max degree == ||A||_inf for a 0/1 adjacency
        if adjacency_norm > 0 and epsilon > 1.0 / adjacency_norm * (1 + 1e-12):
            raise ValidationError(
                f"epsilon={epsilon} exceeds the contraction bound 1/||A||_inf={1.0 / adjacency_norm}"
            )
        operator = np.eye(lap.shape[0]) - epsilon * lap
        operator.setflags(write=False)
        return cls(lap, float(epsilon), operator)

    @classmethod
    def from_united(cls, united: UnitedMdsg) -> "BipartiteKernel":
        return cls.from_laplacian(united.laplacian, united.epsilon)

    @property
    def size(self) -> int:
        return self.operator.shape[0]


def gco_step(kernel: BipartiteKernel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != kernel.size:
        raise ShapeMismatch(f"features {X.shape} do not match kernel of size {kernel.size}")
    return kernel.operator @ X


def gco_iterate(kernel: BipartiteKernel, X: np.ndarray, l: int) -> np.ndarray:
    if l < 0:
        raise ValidationError(f"iteration count must be >= 0, got {l}")
    X = np.asarray(X, dtype=np.float64)
    for _ in range(l):
        X = gco_step(kernel, X)
    return X


def row_l1_distance(Xa: np.ndarray, Xb: np.ndarray) -> float:
    """max_i sum_c |Xa[i,c] - Xb[i,c]|, the metric the contraction is stated in."""
    return float(np.abs(np.asarray(Xa) - np.asarray(Xb)).sum(axis=1).max())


@dataclass(frozen=True)
class FixedPointResult:
    X: np.ndarray
    iterations: int
    converged: bool


def gco_fixed_point(
    kernel: BipartiteKernel,
    X: np.ndarray,
    tol: float = 1e-9,
    l_max: int = 100_000,
    scale: float = 1.0,
) -> FixedPointResult:
    """Iterate until successive iterates differ by less than `tol`.

    The stopping distance is the largest Euclidean row displacement divided
    by `scale` (pass the area width to measure in normalized coordinates).
    Hitting `l_max` is reported through `converged=False`, not raised.
    """
    X = np.asarray(X, dtype=np.float64)
    for it in range(1, l_max + 1):
        nxt = gco_step(kernel, X)
        moved = np.sqrt(((nxt - X) ** 2).sum(axis=1)).max() / scale
        X = nxt
        if moved < tol:
            return FixedPointResult(X, it, True)
    return FixedPointResult(X, l_max, False)


def component_centroids(adjacency: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Replace every row of X by the mean of its connected component."""
    labels = component_labels(adjacency)
    out = np.empty_like(np.asarray(X, dtype=np.float64))
    for c in np.unique(labels):
        mask = labels == c
        out[mask] = X[mask].mean(axis=0)
    return out


def choose_K(h_max: int) -> int:
    """Batch size floor((H_max + 1) / 2), at least 1."""
    if h_max < 1:
        raise ValidationError(f"h_max must be >= 1, got {h_max}")
    return max(1, (h_max + 1) // 2)


@dataclass(frozen=True)
class BatchGraph:
    """K united graphs stitched block-diagonally; block b holds hop count b+1.

    Blocks are stored separately; the dense (K*N)x(K*N) matrices are
    materialized on request.
    """

    blocks: tuple[UnitedMdsg, ...]
    epsilon: float

    @property
    def batch_k(self) -> int:
        return len(self.blocks)

    @property
    def n_nodes(self) -> int:
        return self.blocks[0].n_total

    @property
    def n_remaining(self) -> int:
        return self.blocks[0].n_remaining

    @property
    def features(self) -> np.ndarray:
        return np.tile(self.blocks[0].feature_positions, (self.batch_k, 1))

    @property
    def adjacency(self) -> np.ndarray:
        return _block_diag([b.adjacency for b in self.blocks])

    @property
    def laplacian(self) -> np.ndarray:
        return _block_diag([b.laplacian for b in self.blocks])

    def block_adjacency(self, b: int) -> np.ndarray:
        n = self.n_nodes
        return self.adjacency[b * n:(b + 1) * n, b * n:(b + 1) * n]

    def operators(self) -> np.ndarray:
        """Stacked per-block operators, shape (K, N, N)."""
        eye = np.eye(self.n_nodes)
        return np.stack([eye - self.epsilon * b.laplacian for b in self.blocks])

    def kernel(self) -> BipartiteKernel:
        return BipartiteKernel.from_laplacian(self.laplacian, self.epsilon)


def _block_diag(mats: Sequence[np.ndarray]) -> np.ndarray:
    n = mats[0].shape[0]
    out = np.zeros((n * len(mats), n * len(mats)), dtype=np.asarray(mats[0]).dtype)
    for b, m in enumerate(mats):
        out[b * n:(b + 1) * n, b * n:(b + 1) * n] = m
    return out


def build_batch(united: Sequence[UnitedMdsg]) -> BatchGraph:
    if not united:
        raise ValidationError("need at least one united graph")
    first = united[0]
    for g in united[1:]:
        if g.node_order != first.node_order or g.n_remaining != first.n_remaining:
            raise InconsistentOrder("united graphs have different node orders")
        if not np.array_equal(g.feature_positions, first.feature_positions):
            raise InconsistentOrder("united graphs have different feature positions")
        if g.epsilon != first.epsilon:
            raise InconsistentOrder("united graphs have different epsilon")
    for g in united:
        if g.epsilon > 1.0 / max(infinity_norm(g.adjacency), 1.0) * (1 + 1e-12):
            raise ValidationError(f"epsilon violates the contraction bound at k={g.hop_k}")
    return BatchGraph(tuple(united), float(first.epsilon))
