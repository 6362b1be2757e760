from dataclasses import replace

import numpy as np
import pytest

from swarmheal.apf import (
    apf_recover,
    apf_step_budget,
    apf_upper_bound,
    apf_velocities,
    damage_centroid,
    mdsg_centroid,
)
from swarmheal.core import (
    DamageScenario,
    Mdsg,
    SwarmConfig,
    Usnet,
    build_adjacency,
    build_mdsg,
    compute_hops,
    count_subnets_unionfind,
)
from swarmheal.errors import EmptyMdsg, NoDamage
from swarmheal.experiment import CASE_STUDY_SEED, PAPER_CONFIG
from swarmheal.io import make_scenario


def line_usnet(xs, d_tr=120.0):
    pts = np.column_stack([np.asarray(xs, dtype=float), np.zeros(len(xs))])
    return Usnet.from_positions(pts, d_tr)


def test_mdsg_centroid_examples():
    usnet = Usnet.from_positions(np.array([[100.0, 200.0], [0, 0], [10, 0], [50, 50]]), 500)
    assert np.allclose(mdsg_centroid(Mdsg(3, 1, (0,)), usnet), [100, 200])
    assert np.allclose(mdsg_centroid(Mdsg(3, 1, (1, 2)), usnet), [5, 0])
    with pytest.raises(EmptyMdsg):
        mdsg_centroid(Mdsg(3, 1, ()), usnet)


def test_mdsg_centroid_random_set(paper_case):
    _, usnet, scenario, hops = paper_case
    for r in scenario.remaining:
        m = build_mdsg(scenario, hops, 1, r)
        if len(m) >= 6:
            expected = sum(usnet.positions[i] for i in m.destroyed_neighbors) / len(m)
            assert np.allclose(mdsg_centroid(m, usnet), expected)
            return
    pytest.skip("no node with a 6-neighbour MDSG")


def test_damage_centroid_examples(paper_case):
    usnet = Usnet.from_positions(np.array([[0.0, 0], [0, 10], [10, 0], [10, 10], [3, 3]]), 120)
    s = DamageScenario.from_destroyed(5, [0, 1, 2, 3])
    assert np.allclose(damage_centroid(s, usnet), [5, 5])
    one = DamageScenario.from_destroyed(5, [2])
    assert np.allclose(damage_centroid(one, usnet), [10, 0])
    with pytest.raises(NoDamage):
        damage_centroid(DamageScenario.from_destroyed(5, []), usnet)
    _, u, sc, _ = paper_case
    assert np.allclose(damage_centroid(sc, u), u.positions[list(sc.destroyed)].sum(0) / sc.n_destroyed)


def test_raw_velocity_hand_example():
    # remaining node 0 at the origin; destroyed 1 at (60,0) and 2 at (140,0) give p_a = (100,0)
    usnet = line_usnet([0, 60, 140, 300, 420])
    scenario = DamageScenario.from_destroyed(5, [1, 2])
    hops = compute_hops(usnet)
    # k=1 gives MDSG {1} so p_d = (60,0)
    sol = apf_velocities(scenario, usnet, hops, 1, 10.0)
    assert np.allclose(sol.damage_centroid, [100, 0])
    assert np.allclose(sol.mdsg_centroid[0], [60, 0])
    assert np.allclose(sol.raw_velocity[0], [160, 0])


def test_node_at_damage_centroid_with_empty_mdsg_has_zero_velocity():
    usnet = line_usnet([0, 100, 200, 300, 400])
    scenario = DamageScenario.from_destroyed(5, [4])
    sol = apf_velocities(scenario, line_usnet([400, 100, 200, 300, 400 - 1e-12]), compute_hops(usnet), 1, 10)
    assert np.isnan(sol.mdsg_centroid[0]).all()
    assert np.allclose(sol.raw_velocity[0], 0, atol=1e-9)


def test_velocity_invariants(paper_case):
    config, usnet, scenario, hops = paper_case
    sol = apf_velocities(scenario, usnet, hops, 3, config.v_max)
    speeds = np.linalg.norm(sol.scaled_velocity, axis=1)
    assert speeds.max() == pytest.approx(10.0, abs=1e-12)
    assert np.all(speeds <= 10.0 + 1e-12)
    assert np.allclose(sol.scaled_velocity, sol.raw_velocity * sol.scale)
    assert sol.scale > 0 and np.all(sol.alpha >= 0)
    start = usnet.positions[list(scenario.remaining)]
    for row in range(scenario.n_remaining):
        if sol.alpha[row] > 0:
            term = sol.alpha[row] * (sol.mdsg_centroid[row] - start[row])
            assert np.linalg.norm(term) == pytest.approx(config.d_tr / 2)


def test_upper_bound_examples():
    usnet = line_usnet([0, 0, 100])
    s = DamageScenario.from_destroyed(3, [1])
    assert apf_upper_bound(s, usnet, 120, 10) == pytest.approx(6.0 + 10.0)
    stacked = Usnet.from_positions(np.array([[5.0, 5], [5, 5]]), 120)
    assert apf_upper_bound(DamageScenario.from_destroyed(2, [1]), stacked, 120, 10) == pytest.approx(6.0)
    assert apf_step_budget(16.0, 0.1) == 161


def test_disk_of_diameter_dtr_is_complete():
    rng = np.random.default_rng(5)
    for _ in range(20):
        r = 60 * np.sqrt(rng.random(30))
        th = rng.uniform(0, 2 * np.pi, 30)
        pts = np.column_stack([r * np.cos(th), r * np.sin(th)]) + 500
        adj = build_adjacency(pts, 120)
        assert adj.sum() == 30 * 29


def test_recover_already_connected_takes_zero_steps():
    usnet = line_usnet([0, 100, 200])
    result = apf_recover(usnet, DamageScenario.from_destroyed(3, [2]), SwarmConfig(n_total=3))
    assert result.steps == 0 and result.t_rc == 0


def test_recover_no_damage():
    usnet = line_usnet([0, 100, 200])
    result = apf_recover(usnet, DamageScenario.from_destroyed(3, []), SwarmConfig(n_total=3))
    assert result.steps == 0 and result.final_subnets == 1


def test_recover_random_paper_scenario(paper_case):
    config, usnet, scenario, hops = paper_case
    result = apf_recover(usnet, scenario, config, hops=hops)
    assert result.final_subnets == 1
    assert result.t_rc <= apf_upper_bound(scenario, usnet, config.d_tr, config.v_max) + config.dt
    assert count_subnets_unionfind(build_adjacency(result.final_positions, config.d_tr)) == 1


def test_case_study_recovers_in_single_digit_seconds():
    usnet, scenario = make_scenario(replace(PAPER_CONFIG, rng_seed=CASE_STUDY_SEED), 100)
    result = apf_recover(usnet, scenario, PAPER_CONFIG)
    assert result.ns_series[0] == 7
    assert 1.0 <= result.t_rc < 10.0


def test_ns_series_mostly_non_increasing():
    ups = total = 0
    for seed in range(5):
        config = SwarmConfig(rng_seed=200 + seed)
        usnet, scenario = make_scenario(config, 100)
        series = apf_recover(usnet, scenario, config).ns_series
        ups += sum(b > a for a, b in zip(series, series[1:]))
        total += len(series) - 1
    assert total == 0 or ups / total <= 0.05
