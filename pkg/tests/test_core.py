from collections import deque
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_adjacency
from swarmheal.core import (
    UNREACHABLE,
    DamageScenario,
    RemainedGraph,
    SwarmConfig,
    Usnet,
    build_adjacency,
    build_mdsg,
    build_united_mdsg,
    compute_hops,
    count_subnets_spectral,
    count_subnets_unionfind,
    generate_usnet,
    infinity_norm,
    laplacian,
    random_damage,
)
from swarmheal.errors import GenerationFailed, ValidationError
from swarmheal.experiment import CASE_STUDY_SEED, PAPER_CONFIG
from swarmheal.io import make_scenario


def bfs_row(adj, src):
    n = adj.shape[0]
    dist = np.full(n, UNREACHABLE, dtype=np.int64)
    dist[src] = 0
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            if dist[v] == UNREACHABLE:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


# --- config / generation ---------------------------------------------------

def test_config_rejects_bad_values():
    with pytest.raises(ValidationError):
        SwarmConfig(n_total=0)
    with pytest.raises(ValidationError):
        SwarmConfig(d_tr=-1)
    with pytest.raises(ValueError):
        SwarmConfig(dt=0)


def test_generate_paper_swarm_is_connected():
    usnet = generate_usnet(SwarmConfig(rng_seed=1))
    assert usnet.n_total == 200
    assert count_subnets_unionfind(usnet.adjacency) == 1
    assert usnet.positions.min() >= 0 and usnet.positions.max() <= 1000


def test_generate_two_nodes_in_range():
    usnet = generate_usnet(SwarmConfig(n_total=2, area_width=50, area_height=50, rng_seed=4))
    assert usnet.adjacency.tolist() == [[0, 1], [1, 0]]


def test_generate_fifty_nodes_confirmed_by_union_find():
    usnet = generate_usnet(SwarmConfig(n_total=50, area_width=450, area_height=450, rng_seed=7))
    assert count_subnets_unionfind(build_adjacency(usnet.positions, 120)) == 1


def test_generate_fifty_nodes_over_full_area_is_too_sparse(monkeypatch):
    # mean degree ~2 at this density; connected draws essentially never occur
    import swarmheal.core as core
    monkeypatch.setattr(core, "MAX_LAYOUT_ATTEMPTS", 500)
    with pytest.raises(GenerationFailed):
        generate_usnet(SwarmConfig(n_total=50, rng_seed=7))


def test_generate_is_deterministic():
    a = generate_usnet(SwarmConfig(n_total=40, area_width=400, area_height=400, rng_seed=9))
    b = generate_usnet(SwarmConfig(n_total=40, area_width=400, area_height=400, rng_seed=9))
    assert np.array_equal(a.positions, b.positions)


def test_generate_fails_when_too_sparse(monkeypatch):
    import swarmheal.core as core
    monkeypatch.setattr(core, "MAX_LAYOUT_ATTEMPTS", 5)
    with pytest.raises(GenerationFailed):
        generate_usnet(SwarmConfig(n_total=10, area_width=10_000, area_height=10_000, d_tr=1.0))


# --- adjacency -------------------------------------------------------------

def test_adjacency_boundary_is_inclusive():
    assert build_adjacency(np.array([[0.0, 0.0], [120.0, 0.0]]), 120)[0, 1] == 1
    assert build_adjacency(np.array([[0.0, 0.0], [120.1, 0.0]]), 120)[0, 1] == 0


def test_adjacency_matches_brute_force():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 200, size=(5, 2))
    adj = build_adjacency(pts, 120)
    for i in range(5):
        for j in range(5):
            expected = i != j and np.hypot(*(pts[i] - pts[j])) <= 120
            assert adj[i, j] == int(expected)


@given(st.lists(st.tuples(st.floats(0, 500), st.floats(0, 500)), min_size=1, max_size=30))
@settings(max_examples=50, deadline=None)
def test_adjacency_symmetric_zero_diagonal(points):
    adj = build_adjacency(np.array(points), 120)
    assert np.array_equal(adj, adj.T)
    assert not adj.diagonal().any()


# --- sub-net counting --------------------------------------------------------

def test_unionfind_small_cases():
    assert count_subnets_unionfind(np.ones((3, 3), dtype=int) - np.eye(3, dtype=int)) == 1
    assert count_subnets_unionfind(np.zeros((3, 3), dtype=int)) == 3


def test_case_study_layout_splits_into_seven():
    usnet, scenario = make_scenario(replace(PAPER_CONFIG, rng_seed=CASE_STUDY_SEED), 100)
    assert count_subnets_unionfind(RemainedGraph.at_split(usnet, scenario).adjacency) == 7


def test_spectral_small_cases():
    path = np.zeros((4, 4), dtype=int)
    for i in range(3):
        path[i, i + 1] = path[i + 1, i] = 1
    assert count_subnets_spectral(path) == 1
    two_edges = np.zeros((4, 4), dtype=int)
    two_edges[0, 1] = two_edges[1, 0] = two_edges[2, 3] = two_edges[3, 2] = 1
    assert count_subnets_spectral(two_edges) == 2


@given(st.integers(1, 60), st.floats(0.0, 0.3), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_spectral_equals_unionfind(n, p, seed):
    adj = random_adjacency(np.random.default_rng(seed), n, p)
    assert count_subnets_spectral(adj) == count_subnets_unionfind(adj)


def test_laplacian_rows_sum_to_zero_and_psd():
    adj = random_adjacency(np.random.default_rng(1), 40, 0.2)
    lap = RemainedGraph(np.zeros((40, 2)), adj).laplacian
    assert np.all(lap.sum(axis=1) == 0)
    assert np.linalg.eigvalsh(lap).min() > -1e-9


# --- hops / MDSG ------------------------------------------------------------

def test_hops_triangle_and_path():
    tri = np.ones((3, 3), dtype=int) - np.eye(3, dtype=int)
    h = compute_hops(tri)
    assert h.h_max == 1 and np.all(h.hops[~np.eye(3, dtype=bool)] == 1)
    path = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    assert compute_hops(path).hops[0, 2] == 2


def test_hops_match_single_source_bfs(paper_case):
    _, usnet, _, hops = paper_case
    for src in range(0, usnet.n_total, 7):
        assert np.array_equal(hops.hops[src], bfs_row(usnet.adjacency, src))
    assert hops.h_max == hops.hops.max()


def test_hops_unreachable_sentinel():
    adj = np.zeros((3, 3), dtype=int)
    adj[0, 1] = adj[1, 0] = 1
    h = compute_hops(adj)
    assert h.hops[0, 2] == UNREACHABLE and h.h_max == 1


def test_mdsg_matches_brute_force(desk_case):
    _, usnet, scenario, hops = desk_case
    for r in scenario.remaining[:10]:
        m = build_mdsg(scenario, hops, 3, r)
        expected = [d for d in scenario.destroyed if bfs_row(usnet.adjacency, r)[d] <= 3]
        assert list(m.destroyed_neighbors) == expected


def test_mdsg_extremes(desk_case):
    _, _, scenario, hops = desk_case
    r = scenario.remaining[0]
    assert len(build_mdsg(scenario, hops, 0, r)) == 0
    assert build_mdsg(scenario, hops, hops.h_max, r).destroyed_neighbors == scenario.destroyed


def test_mdsg_empty_when_damage_far_away():
    pts = np.array([[0.0, 0], [100, 0], [200, 0], [300, 0], [400, 0]])
    usnet = Usnet.from_positions(pts, 120)
    scenario = DamageScenario.from_destroyed(5, [4])
    assert len(build_mdsg(scenario, compute_hops(usnet), 2, 0)) == 0


def test_mdsg_rejects_destroyed_owner(desk_case):
    _, _, scenario, hops = desk_case
    with pytest.raises(ValidationError):
        build_mdsg(scenario, hops, 1, scenario.destroyed[0])


def test_united_mdsg_structure(desk_case):
    _, usnet, scenario, hops = desk_case
    n_r = scenario.n_remaining
    prev = None
    for k in range(1, hops.h_max + 1):
        u = build_united_mdsg(scenario, usnet, hops, k)
        assert u.node_order == scenario.remaining + scenario.destroyed
        assert not u.adjacency[:n_r, :n_r].any() and not u.adjacency[n_r:, n_r:].any()
        assert np.array_equal(u.adjacency, u.adjacency.T)
        assert u.epsilon == 1.0 / usnet.n_total
        assert infinity_norm(u.adjacency) < usnet.n_total
        assert np.array_equal(u.feature_positions, usnet.positions[list(u.node_order)])
        if prev is not None:
            assert np.all(u.adjacency >= prev)
        prev = u.adjacency


def test_united_mdsg_k1_is_cross_adjacency(desk_case):
    _, usnet, scenario, hops = desk_case
    u = build_united_mdsg(scenario, usnet, hops, 1)
    rem, dst = list(scenario.remaining), list(scenario.destroyed)
    direct = build_adjacency(usnet.positions, usnet.d_tr)[np.ix_(rem, dst)]
    assert np.array_equal(u.adjacency[: len(rem), len(rem):], direct)


# --- damage ---------------------------------------------------------------

def test_damage_partition():
    s = random_damage(200, 190, np.random.default_rng(1))
    assert s.n_destroyed == 190 and len(set(s.destroyed)) == 190
    assert set(s.destroyed) | set(s.remaining) == set(range(200))


def test_damage_validation():
    with pytest.raises(ValidationError):
        random_damage(10, 10, 0)
    with pytest.raises(ValidationError):
        DamageScenario.from_destroyed(5, [7])
    with pytest.raises(ValidationError):
        DamageScenario(3, (0,), (0, 1, 2))


def test_laplacian_definition():
    adj = np.array([[0, 1], [1, 0]])
    assert laplacian(adj).tolist() == [[1, -1], [-1, 1]]
