"""Swarm network model: disk-graph topology, damage scenarios, hop distances
and the multi-hop differential sub-graphs built from them.

Node ids are 0-based everywhere in code and files.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import EigenFailure, GenerationFailed, ValidationError

# Hop count stored for unreachable pairs. Chosen so `hops <= k` is False for any k.
UNREACHABLE = np.iinfo(np.int64).max

MAX_LAYOUT_ATTEMPTS = 10_000


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SwarmConfig:
    n_total: int = 200
    area_width: float = 1000.0
    area_height: float = 1000.0
    d_tr: float = 120.0
    v_max: float = 10.0
    dt: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_total < 2:
            raise ValidationError(f"n_total must be >= 2, got {self.n_total}")
        for name in ("area_width", "area_height", "d_tr", "v_max", "dt"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive, got {value}")


# ---------------------------------------------------------------------------
# connectivity
# ---------------------------------------------------------------------------

class UnionFind:
    """Disjoint-set forest with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.count = n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.count -= 1
        return True


def _edge_list(adjacency: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.nonzero(np.triu(adjacency, 1))
    return rows, cols


def component_labels(adjacency: np.ndarray) -> np.ndarray:
    """Label each node with a component index 0..S-1, numbered by first appearance."""
    adjacency = np.asarray(adjacency)
    n = adjacency.shape[0]
    uf = UnionFind(n)
    for i, j in zip(*_edge_list(adjacency)):
        uf.union(int(i), int(j))
    roots = [uf.find(i) for i in range(n)]
    relabel: dict[int, int] = {}
    return np.array([relabel.setdefault(r, len(relabel)) for r in roots], dtype=np.int64)


def count_subnets_unionfind(adjacency: np.ndarray) -> int:
    """Number of connected components of an undirected 0/1 adjacency matrix."""
    adjacency = np.asarray(adjacency)
    n = adjacency.shape[0]
    if n == 0:
        return 0
    uf = UnionFind(n)
    for i, j in zip(*_edge_list(adjacency)):
        uf.union(int(i), int(j))
        if uf.count == 1:
            break
    return uf.count


def laplacian(adjacency: np.ndarray) -> np.ndarray:
    adjacency = np.asarray(adjacency, dtype=np.float64)
    return np.diag(adjacency.sum(axis=1)) - adjacency


def build_adjacency(positions: np.ndarray, d_tr: float) -> np.ndarray:
    """Disk-model adjacency: a_ij = 1 iff ||p_i - p_j|| <= d_tr, zero diagonal."""
    positions = np.asarray(positions, dtype=np.float64)
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    adjacency = (dist <= d_tr).astype(np.int8)
    np.fill_diagonal(adjacency, 0)
    return adjacency


def is_connected(positions: np.ndarray, d_tr: float) -> bool:
    return count_subnets_unionfind(build_adjacency(positions, d_tr)) == 1


# ---------------------------------------------------------------------------
# swarm, damage, remained graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Usnet:
    """Pre-damage swarm: node positions and disk-model adjacency."""

    positions: np.ndarray
    adjacency: np.ndarray
    d_tr: float

    def __post_init__(self):
        object.__setattr__(self, "positions", _frozen(np.asarray(self.positions, dtype=np.float64)))
        object.__setattr__(self, "adjacency", _frozen(np.asarray(self.adjacency, dtype=np.int8)))

    @classmethod
    def from_positions(cls, positions: np.ndarray, d_tr: float) -> "Usnet":
        positions = np.asarray(positions, dtype=np.float64)
        return cls(positions, build_adjacency(positions, d_tr), float(d_tr))

    @property
    def n_total(self) -> int:
        return self.positions.shape[0]

    @property
    def index(self) -> np.ndarray:
        return np.arange(self.n_total)


def generate_usnet(config: SwarmConfig) -> Usnet:
    """Uniform random connected layout, found by seeded rejection sampling.

    All N positions are redrawn until the disk graph has a single component.
    Raises GenerationFailed after MAX_LAYOUT_ATTEMPTS draws.
    """
    rng = np.random.default_rng(config.rng_seed)
    high = np.array([config.area_width, config.area_height])
    for _ in range(MAX_LAYOUT_ATTEMPTS):
        positions = rng.uniform(0.0, 1.0, size=(config.n_total, 2)) * high
        adjacency = build_adjacency(positions, config.d_tr)
        if count_subnets_unionfind(adjacency) == 1:
            return Usnet(positions, adjacency, float(config.d_tr))
    raise GenerationFailed(
        f"no connected layout of {config.n_total} nodes in "
        f"{config.area_width}x{config.area_height} m with d_tr={config.d_tr} "
        f"after {MAX_LAYOUT_ATTEMPTS} attempts"
    )


@dataclass(frozen=True)
class DamageScenario:
    n_total: int
    destroyed: tuple[int, ...]
    remaining: tuple[int, ...]
    t0: float = 0.0

    def __post_init__(self):
        d, r = set(self.destroyed), set(self.remaining)
        if len(d) != len(self.destroyed) or len(r) != len(self.remaining):
            raise ValidationError("duplicate node ids in scenario")
        if d & r:
            raise ValidationError("a node cannot be both destroyed and remaining")
        if d | r != set(range(self.n_total)):
            raise ValidationError("destroyed and remaining must partition 0..N-1")

    @classmethod
    def from_destroyed(cls, n_total: int, destroyed: Iterable[int], t0: float = 0.0) -> "DamageScenario":
        destroyed = tuple(sorted(int(i) for i in destroyed))
        bad = [i for i in destroyed if not 0 <= i < n_total]
        if bad:
            raise ValidationError(f"node ids out of range: {bad}")
        dset = set(destroyed)
        remaining = tuple(i for i in range(n_total) if i not in dset)
        return cls(n_total, destroyed, remaining, float(t0))

    @property
    def n_destroyed(self) -> int:
        return len(self.destroyed)

    @property
    def n_remaining(self) -> int:
        return len(self.remaining)


def random_damage(n_total: int, n_destroyed: int, rng: np.random.Generator | int) -> DamageScenario:
    """Destroy `n_destroyed` distinct nodes drawn uniformly without replacement."""
    if not 0 <= n_destroyed < n_total:
        raise ValidationError(f"need 0 <= N_D < N, got N_D={n_destroyed}, N={n_total}")
    rng = np.random.default_rng(rng)
    destroyed = rng.choice(n_total, size=n_destroyed, replace=False)
    return DamageScenario.from_destroyed(n_total, destroyed)


@dataclass(frozen=True)
class RemainedGraph:
    positions: np.ndarray
    adjacency: np.ndarray

    @classmethod
    def from_positions(cls, positions: np.ndarray, d_tr: float) -> "RemainedGraph":
        positions = _frozen(np.asarray(positions, dtype=np.float64))
        return cls(positions, _frozen(build_adjacency(positions, d_tr)))

    @classmethod
    def at_split(cls, usnet: Usnet, scenario: DamageScenario) -> "RemainedGraph":
        idx = np.array(scenario.remaining, dtype=np.int64)
        return cls.from_positions(usnet.positions[idx], usnet.d_tr)

    @property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency, dtype=np.int64).sum(axis=1)

    @property
    def laplacian(self) -> np.ndarray:
        return laplacian(self.adjacency)


def count_subnets_spectral(remained: RemainedGraph | np.ndarray, zero_tol: float | None = None) -> int:
    """Number of (numerically) zero Laplacian eigenvalues.

    `remained` may also be a bare adjacency matrix. The default tolerance
    1e-8 * N scales with the graph size.
    """
    adjacency = remained.adjacency if isinstance(remained, RemainedGraph) else np.asarray(remained)
    n = adjacency.shape[0]
    if n == 0:
        return 0
    if zero_tol is None:
        zero_tol = 1e-8 * n
    try:
        eigenvalues = linalg.eigvalsh(laplacian(adjacency))
    except linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    return int(np.count_nonzero(np.abs(eigenvalues) < zero_tol))


# ---------------------------------------------------------------------------
# hop distances and differential sub-graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HopMatrix:
    hops: np.ndarray
    h_max: int

    def within(self, k: int) -> np.ndarray:
        """Boolean matrix of pairs at hop distance <= k."""
        return self.hops <= k


def compute_hops(usnet: Usnet | np.ndarray) -> HopMatrix:
    """All-pairs BFS hop counts, one frontier expansion per hop level."""
    adjacency = usnet.adjacency if isinstance(usnet, Usnet) else np.asarray(usnet)
    n = adjacency.shape[0]
    adj = adjacency.astype(bool)
    hops = np.full((n, n), UNREACHABLE, dtype=np.int64)
    np.fill_diagonal(hops, 0)
    reached = np.eye(n, dtype=bool)
    frontier = reached.copy()
    level = 0
    while frontier.any():
        level += 1
        # row s of `nxt`: nodes adjacent to the level-(l-1) frontier of source s
        nxt = (frontier.astype(np.int32) @ adj.astype(np.int32)) > 0
        nxt &= ~reached
        hops[nxt] = level
        reached |= nxt
        frontier = nxt
    finite = hops[hops != UNREACHABLE]
    return HopMatrix(_frozen(hops), int(finite.max()) if finite.size else 0)


@dataclass(frozen=True)
class Mdsg:
    owner: int
    hop_k: int
    destroyed_neighbors: tuple[int, ...]

    def __len__(self):
        return len(self.destroyed_neighbors)


def build_mdsg(scenario: DamageScenario, hops: HopMatrix, k: int, r_i: int) -> Mdsg:
    """Destroyed nodes within `k` pre-damage hops of remaining node `r_i`."""
    if r_i not in set(scenario.remaining):
        raise ValidationError(f"node {r_i} is not a remaining node")
    if k < 0:
        raise ValidationError(f"hop count must be >= 0, got {k}")
    row = hops.hops[r_i]
    members = tuple(d for d in scenario.destroyed if row[d] <= k)
    return Mdsg(int(r_i), int(k), members)


@dataclass(frozen=True)
class UnitedMdsg:
    """Bipartite k-hop differential graph over all N nodes.

    Rows are ordered remaining ids first, then destroyed ids.
    """

    hop_k: int
    node_order: tuple[int, ...]
    n_remaining: int
    feature_positions: np.ndarray
    adjacency: np.ndarray
    epsilon: float
    laplacian: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "feature_positions", _frozen(self.feature_positions))
        object.__setattr__(self, "adjacency", _frozen(self.adjacency))
        if self.laplacian is None:
            object.__setattr__(self, "laplacian", _frozen(laplacian(self.adjacency)))

    @property
    def n_total(self) -> int:
        return len(self.node_order)


def build_united_mdsg(scenario: DamageScenario, usnet: Usnet, hops: HopMatrix, k: int) -> UnitedMdsg:
    rem = np.array(scenario.remaining, dtype=np.int64)
    dst = np.array(scenario.destroyed, dtype=np.int64)
    n = usnet.n_total
    n_r = len(rem)
    cross = (hops.hops[np.ix_(rem, dst)] <= k).astype(np.int8)
    adjacency = np.zeros((n, n), dtype=np.int8)
    adjacency[:n_r, n_r:] = cross
    adjacency[n_r:, :n_r] = cross.T
    order = np.concatenate([rem, dst])
    return UnitedMdsg(
        hop_k=int(k),
        node_order=tuple(int(i) for i in order),
        n_remaining=n_r,
        feature_positions=usnet.positions[order],
        adjacency=adjacency,
        epsilon=1.0 / n,
    )


def infinity_norm(matrix: np.ndarray) -> float:
    """Maximum absolute row sum."""
    return float(np.abs(np.asarray(matrix, dtype=np.float64)).sum(axis=1).max())


def centroid(points: np.ndarray | Sequence) -> np.ndarray:
    return np.asarray(points, dtype=np.float64).mean(axis=0)
