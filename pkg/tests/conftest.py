from dataclasses import replace

import numpy as np
import pytest

from swarmheal.core import SwarmConfig, compute_hops
from swarmheal.experiment import DESK_CONFIG
from swarmheal.io import make_scenario


def random_adjacency(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    upper = np.triu(rng.random((n, n)) < p, 1)
    return (upper | upper.T).astype(np.int8)


@pytest.fixture(scope="session")
def desk_case():
    """A desk-scale (N=60) scenario with half the swarm destroyed."""
    config = replace(DESK_CONFIG, rng_seed=3)
    usnet, scenario = make_scenario(config, 30)
    return config, usnet, scenario, compute_hops(usnet)


@pytest.fixture(scope="session")
def paper_case():
    config = SwarmConfig(rng_seed=11)
    usnet, scenario = make_scenario(config, 100)
    return config, usnet, scenario, compute_hops(usnet)


def tiny_problem(seed: int, n_total: int = 12, n_destroyed: int = 5, K: int = 2):
    from swarmheal.gcn import build_problem

    config = SwarmConfig(n_total=n_total, area_width=400, area_height=400, rng_seed=seed)
    usnet, scenario = make_scenario(config, n_destroyed)
    return config, build_problem(usnet, scenario, config, K=K)


def gradient_check(seed: int, num_layers: int = 2, hidden_dim: int = 8, h: float = 1e-5,
                   gain: float = 3.0) -> tuple[float, float]:
    """Max relative error (per weight matrix, 2-norm) of backprop vs central differences.

    Initial weights are multiplied by `gain` so the candidates spread out and
    the connectivity hinge is active. Returns (error, hinge value).
    """
    from swarmheal.gcn import backward, forward, init_model, joint_loss

    config, problem = tiny_problem(seed)
    model = init_model(num_layers, hidden_dim, seed=seed, dropout_rate=0.0, coordinate_scale=config.area_width)
    model.weights = [w * gain for w in model.weights]
    lam, tau = 0.7, 1.3

    def loss():
        out = forward(model, problem.batch)
        return joint_loss(out, problem.start, problem.d_tr, problem.v_max, lam, tau).total

    out, cache = forward(model, problem.batch, return_cache=True)
    terms = joint_loss(out, problem.start, problem.d_tr, problem.v_max, lam, tau)
    grads = backward(model, cache, terms.grad)
    worst = 0.0
    for w, g in zip(model.weights, grads):
        fd = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + h
            up = loss()
            w[idx] = orig - h
            down = loss()
            w[idx] = orig
            fd[idx] = (up - down) / (2 * h)
        denom = max(np.linalg.norm(fd), np.linalg.norm(g), 1e-12)
        worst = max(worst, float(np.linalg.norm(fd - g) / denom))
    return worst, terms.conn_term


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
