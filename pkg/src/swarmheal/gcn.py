"""Trainable bipartite graph-convolution planner.

An L-layer network maps the pre-damage positions of all N nodes, replicated
once per hop count k = 1..K, to K candidate position matrices. Each layer is

    H <- act((I - eps*L_k) @ H @ W)

with a leaky rectifier on hidden layers and identity on the output. The first
N_R rows of a candidate are target positions for the remaining nodes; the
chosen candidate is the fastest one whose targets form a connected graph.

Gradients are computed by hand (reverse mode) in float64.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import (
    DamageScenario,
    HopMatrix,
    SwarmConfig,
    Usnet,
    build_adjacency,
    build_united_mdsg,
    component_labels,
    compute_hops,
    count_subnets_unionfind,
)
from .errors import FormatError, NoConnectedCandidate, NumericalOverflow, ShapeMismatch, ValidationError
from .gco import BatchGraph, build_batch, choose_K
from .optim import Adam
from .sim import TargetPolicy, simulate, target_step_budget

DESK_PROFILE = {"num_layers": 4, "hidden_dim": 64}
PAPER_PROFILE = {"num_layers": 8, "hidden_dim": 512}


@dataclass
class GcnModel:
    weights: list[np.ndarray]
    dropout_rate: float = 0.1
    # epsilon of the graph the weights were last fitted on; forward uses the batch's own
    epsilon: float = 0.0
    coordinate_scale: float = 1000.0
    negative_slope: float = 0.01

    def __post_init__(self):
        if len(self.weights) < 2:
            raise ValidationError("a model needs at least 2 layers")
        if self.weights[0].shape[0] != 2 or self.weights[-1].shape[1] != 2:
            raise ShapeMismatch("first layer must take 2 features and last layer emit 2")
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ShapeMismatch(f"layer shapes {a.shape} and {b.shape} do not chain")

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def hidden_dim(self) -> int:
        return self.weights[0].shape[1]

    def copy(self) -> "GcnModel":
        return replace(self, weights=[w.copy() for w in self.weights])


def init_model(
    num_layers: int = 4,
    hidden_dim: int = 64,
    seed: int = 0,
    dropout_rate: float = 0.1,
    coordinate_scale: float = 1000.0,
    negative_slope: float = 0.01,
) -> GcnModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights."""
    if num_layers < 2:
        raise ValidationError("num_layers must be >= 2")
    rng = np.random.default_rng(seed)
    dims = [2] + [hidden_dim] * (num_layers - 1) + [2]
    weights = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    return GcnModel(weights, dropout_rate, 0.0, float(coordinate_scale), negative_slope)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

@dataclass
class ForwardCache:
    operators: np.ndarray          # (K, N, N)
    convolved: list[np.ndarray]    # per layer, (K, N, d_in): operator @ H
    preact: list[np.ndarray]       # per layer, (K, N, d_out)
    masks: list[np.ndarray | None]
    center: np.ndarray
    scale: float


def _act(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def _act_grad(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, 1.0, slope)


def forward(
    model: GcnModel,
    batch: BatchGraph,
    training: bool = False,
    rng: np.random.Generator | None = None,
    return_cache: bool = False,
):
    """Candidate positions for every hop count, shape (K, N, 2), in meters.

    Inputs are centered on the node centroid (a fixed point of every layer's
    operator) and divided by `coordinate_scale`; outputs are mapped back.
    """
    ops = batch.operators()
    feats = batch.blocks[0].feature_positions
    center = feats.mean(axis=0)
    scale = model.coordinate_scale
    K, N = ops.shape[0], ops.shape[1]
    h = np.broadcast_to((feats - center) / scale, (K, N, 2)).copy()
    if model.weights[0].shape[0] != h.shape[-1]:
        raise ShapeMismatch("model input width does not match feature width")
    if training and model.dropout_rate > 0 and rng is None:
        raise ValueError("training forward with dropout needs an rng")
    convolved, preact, masks = [], [], []
    last = model.num_layers - 1
    for l, w in enumerate(model.weights):
        z = ops @ h
        a = z @ w
        convolved.append(z)
        preact.append(a)
        if l == last:
            h = a
            masks.append(None)
        else:
            h = _act(a, model.negative_slope)
            if training and model.dropout_rate > 0:
                keep = 1.0 - model.dropout_rate
                mask = (rng.random(h.shape) < keep) / keep
                h = h * mask
                masks.append(mask)
            else:
                masks.append(None)
    out = h * scale + center
    if return_cache:
        return out, ForwardCache(ops, convolved, preact, masks, center, scale)
    return out


def backward(model: GcnModel, cache: ForwardCache, grad_out: np.ndarray) -> list[np.ndarray]:
    """Gradients of a scalar loss w.r.t. every weight matrix, given dLoss/dOutput."""
    dh = np.asarray(grad_out, dtype=np.float64) * cache.scale
    grads: list[np.ndarray] = [None] * model.num_layers
    ops_t = np.swapaxes(cache.operators, 1, 2)
    last = model.num_layers - 1
    # non-finite values are reported below as NumericalOverflow, not as warnings
    with np.errstate(invalid="ignore", over="ignore"):
        for l in range(last, -1, -1):
            if l == last:
                da = dh
            else:
                if cache.masks[l] is not None:
                    dh = dh * cache.masks[l]
                da = dh * _act_grad(cache.preact[l], model.negative_slope)
            grads[l] = np.einsum("kni,knj->ij", cache.convolved[l], da)
            if l > 0:
                dh = ops_t @ (da @ model.weights[l].T)
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericalOverflow("non-finite gradient")
    return grads


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def _unit_rows(delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt((delta ** 2).sum(axis=-1))
    units = np.zeros_like(delta)
    nz = norms > 0
    units[nz] = delta[nz] / norms[nz][..., None]
    return norms, units


def candidate_times(candidates: np.ndarray, start: np.ndarray, v_max: float) -> np.ndarray:
    """Per-candidate recovery time: slowest remaining node at full speed."""
    n_r = start.shape[0]
    disp = np.sqrt(((candidates[:, :n_r] - start) ** 2).sum(axis=-1))
    return disp.max(axis=1) / v_max


def candidate_subnets(candidates: np.ndarray, n_remaining: int, d_tr: float) -> np.ndarray:
    return np.array([count_subnets_unionfind(build_adjacency(c[:n_remaining], d_tr)) for c in candidates])


def connectivity_hinge(positions: np.ndarray, d_tr: float) -> tuple[float, np.ndarray, int]:
    """Sum over component pairs of max(0, closest cross-pair distance - d_tr).

    Returns (value, gradient w.r.t. positions, number of components). The
    gradient flows through the closest pair of each component pair.
    """
    positions = np.asarray(positions, dtype=np.float64)
    grad = np.zeros_like(positions)
    labels = component_labels(build_adjacency(positions, d_tr))
    n_comp = int(labels.max()) + 1 if labels.size else 0
    if n_comp <= 1:
        return 0.0, grad, n_comp
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    members = [np.flatnonzero(labels == c) for c in range(n_comp)]
    value = 0.0
    for a in range(n_comp):
        for b in range(a + 1, n_comp):
            sub = dist[np.ix_(members[a], members[b])]
            flat = int(np.argmin(sub))
            ia, ib = np.unravel_index(flat, sub.shape)
            i, j = members[a][ia], members[b][ib]
            gap = dist[i, j] - d_tr
            if gap > 0:
                value += gap
                u = diff[i, j] / dist[i, j]
                grad[i] += u
                grad[j] -= u
    return value, grad, n_comp


@dataclass
class LossTerms:
    total: float
    time_term: float
    conn_term: float
    l1_term: float
    conn_hard: int
    k_index: int                     # 0-based block the time/conn terms used
    grad: np.ndarray                 # d total / d candidates, (K, N, 2)
    term_grads: dict = field(repr=False, default_factory=dict)


def joint_loss(
    candidates: np.ndarray,
    start: np.ndarray,
    d_tr: float,
    v_max: float,
    lam: float = 1.0,
    tau: float = 1.0,
) -> LossTerms:
    """Recovery time of the fastest candidate + lam * connectivity hinge + tau * mean displacement.

    `start` holds the split-instant positions of the N_R remaining nodes,
    which occupy the first N_R rows of each candidate.
    """
    candidates = np.asarray(candidates, dtype=np.float64)
    K, N, _ = candidates.shape
    n_r = start.shape[0]
    delta = candidates[:, :n_r] - start
    norms, units = _unit_rows(delta)

    times = norms.max(axis=1) / v_max
    k = int(np.argmin(times))
    i_star = int(np.argmax(norms[k]))
    g_time = np.zeros_like(candidates)
    g_time[k, i_star] = units[k, i_star] / v_max

    hinge, g_hinge_r, n_comp = connectivity_hinge(candidates[k, :n_r], d_tr)
    g_conn = np.zeros_like(candidates)
    g_conn[k, :n_r] = g_hinge_r

    l1 = float(norms.sum() / (K * n_r))
    g_l1 = np.zeros_like(candidates)
    g_l1[:, :n_r] = units / (K * n_r)

    total = float(times[k]) + lam * hinge + tau * l1
    return LossTerms(
        total=total,
        time_term=float(times[k]),
        conn_term=float(hinge),
        l1_term=l1,
        conn_hard=n_comp - 1,
        k_index=k,
        grad=g_time + lam * g_conn + tau * g_l1,
        term_grads={"time": g_time, "conn": g_conn, "l1": g_l1},
    )


# ---------------------------------------------------------------------------
# solution selection
# ---------------------------------------------------------------------------

def select_k_star(times, subnets) -> int:
    """1-based hop count of the fastest connected candidate; ties go to smaller k."""
    times = np.asarray(times, dtype=np.float64)
    subnets = np.asarray(subnets)
    if times.size == 0:
        raise NoConnectedCandidate("no candidates")
    feasible = np.flatnonzero(subnets == 1)
    if feasible.size == 0:
        raise NoConnectedCandidate("no candidate restores connectivity")
    best = feasible[np.argmin(times[feasible])]
    return int(best) + 1


@dataclass(frozen=True)
class GcSolution:
    candidate_positions: np.ndarray   # (K, N, 2)
    recovery_times: np.ndarray        # (K,)
    subnets: np.ndarray               # (K,)
    k_star: int | None                # None when the fallback was used
    target_positions: np.ndarray      # (N_R, 2)
    fallback_used: bool

    @property
    def recovery_time(self) -> float:
        if self.k_star is None:
            return float("nan")
        return float(self.recovery_times[self.k_star - 1])


def make_solution(candidates: np.ndarray, start: np.ndarray, d_tr: float, v_max: float) -> GcSolution:
    n_r = start.shape[0]
    times = candidate_times(candidates, start, v_max)
    subnets = candidate_subnets(candidates, n_r, d_tr)
    k_star = select_k_star(times, subnets)
    return GcSolution(candidates, times, subnets, k_star, candidates[k_star - 1, :n_r].copy(), False)


def fallback_solution(candidates: np.ndarray, all_positions: np.ndarray, start: np.ndarray,
                      d_tr: float, v_max: float) -> GcSolution:
    """Every remaining node flies to the centroid of the whole original swarm."""
    n_r = start.shape[0]
    p_c = np.asarray(all_positions, dtype=np.float64).mean(axis=0)
    return GcSolution(
        candidates,
        candidate_times(candidates, start, v_max),
        candidate_subnets(candidates, n_r, d_tr),
        None,
        np.tile(p_c, (n_r, 1)),
        True,
    )


def gc_velocity_schedule(solution: GcSolution, start: np.ndarray, v_max: float, dt: float) -> TargetPolicy:
    """Full speed straight at each target, zero velocity after arrival."""
    return TargetPolicy(solution.target_positions, v_max, dt)


def arrival_times(solution: GcSolution, start: np.ndarray, v_max: float) -> np.ndarray:
    return np.sqrt(((solution.target_positions - start) ** 2).sum(axis=1)) / v_max


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    max_epochs: int = 200
    dropout: float = 0.1
    lambda_init: float = 1.0
    tau_init: float = 1.0
    gradnorm_enabled: bool = True
    gradnorm_rate: float = 0.5
    early_stop_patience: int = 50
    early_stop_rel_tol: float = 1e-4
    rng_seed: int = 0
    pretrained_path: str | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.early_stop_patience < 1:
            raise ValidationError("early_stop_patience must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValidationError("dropout must be in [0, 1)")


MULTIPLIER_BOUNDS = (1e-3, 1e3)


def gradnorm_update(model: GcnModel, cache: ForwardCache, terms: LossTerms,
                    lam: float, tau: float, rate: float) -> tuple[float, float]:
    """Move lam and tau so each weighted term's gradient norm at the output layer
    approaches the mean of the active weighted norms."""
    z = cache.convolved[-1]

    def norm(g):
        return float(np.linalg.norm(np.einsum("kni,knj->ij", z, g * cache.scale)))

    g_time, g_conn, g_l1 = (norm(terms.term_grads[n]) for n in ("time", "conn", "l1"))
    weighted = {"time": g_time, "conn": lam * g_conn, "l1": tau * g_l1}
    active = [v for v in weighted.values() if v > 0]
    if not active:
        return lam, tau
    target = float(np.mean(active))
    lo, hi = MULTIPLIER_BOUNDS
    if weighted["conn"] > 0:
        lam = float(np.clip(lam * (target / weighted["conn"]) ** rate, lo, hi))
    if weighted["l1"] > 0:
        tau = float(np.clip(tau * (target / weighted["l1"]) ** rate, lo, hi))
    return lam, tau


@dataclass(frozen=True)
class Problem:
    """Everything training needs about one damage scenario."""

    batch: BatchGraph
    start: np.ndarray          # (N_R, 2) split-instant positions of remaining nodes
    all_positions: np.ndarray  # (N, 2)
    d_tr: float
    v_max: float


def build_problem(usnet: Usnet, scenario: DamageScenario, config: SwarmConfig,
                  hops: HopMatrix | None = None, K: int | None = None) -> Problem:
    hops = hops if hops is not None else compute_hops(usnet)
    K = K if K is not None else choose_K(max(hops.h_max, 1))
    united = [build_united_mdsg(scenario, usnet, hops, k) for k in range(1, K + 1)]
    return Problem(
        batch=build_batch(united),
        start=usnet.positions[list(scenario.remaining)],
        all_positions=np.asarray(usnet.positions),
        d_tr=config.d_tr,
        v_max=config.v_max,
    )


HISTORY_FIELDS = ("epoch", "total", "time_term", "conn_hard", "conn_surrogate", "l1", "lambda", "tau")


def train(model: GcnModel, problem: Problem, config: TrainConfig = TrainConfig()):
    """Fine-tune a copy of `model` on one scenario.

    Returns (trained model, GcSolution, history). Every epoch first evaluates
    the current weights with dropout off (logged, and used to keep the best
    feasible solution), then takes one optimizer step on a dropout forward.
    """
    model = model.copy()
    model.dropout_rate = config.dropout
    model.epsilon = problem.batch.epsilon
    rng = np.random.default_rng(config.rng_seed)
    opt = Adam(model.weights, lr=config.learning_rate)
    lam, tau = config.lambda_init, config.tau_init
    history: list[dict] = []
    best: GcSolution | None = None
    best_weights = None
    stale = 0

    for epoch in range(config.max_epochs):
        candidates = forward(model, problem.batch, training=False)
        terms = joint_loss(candidates, problem.start, problem.d_tr, problem.v_max, lam, tau)
        history.append(dict(zip(HISTORY_FIELDS, (
            epoch, terms.total, terms.time_term, terms.conn_hard, terms.conn_term, terms.l1_term, lam, tau))))

        try:
            sol = make_solution(candidates, problem.start, problem.d_tr, problem.v_max)
        except NoConnectedCandidate:
            sol = None
        if sol is not None:
            if best is None or sol.recovery_time < best.recovery_time * (1 - config.early_stop_rel_tol):
                stale = 0
            else:
                stale += 1
            if best is None or sol.recovery_time < best.recovery_time:
                best, best_weights = sol, [w.copy() for w in model.weights]
        elif best is not None:
            stale += 1
        if best is not None and stale >= config.early_stop_patience:
            break

        out, cache = forward(model, problem.batch, training=True, rng=rng, return_cache=True)
        step_terms = joint_loss(out, problem.start, problem.d_tr, problem.v_max, lam, tau)
        grads = backward(model, cache, step_terms.grad)
        opt.step(grads)
        if config.gradnorm_enabled:
            lam, tau = gradnorm_update(model, cache, step_terms, lam, tau, config.gradnorm_rate)

    if best is None:
        # evaluate the final weights once more before giving up
        candidates = forward(model, problem.batch, training=False)
        try:
            best = make_solution(candidates, problem.start, problem.d_tr, problem.v_max)
            best_weights = [w.copy() for w in model.weights]
        except NoConnectedCandidate:
            best = fallback_solution(candidates, problem.all_positions, problem.start,
                                     problem.d_tr, problem.v_max)
    if best_weights is not None:
        model.weights = best_weights
    return model, best, history


def pretrain(model: GcnModel, problems: list[Problem], epochs: int,
             config: TrainConfig = TrainConfig(), log=None) -> GcnModel:
    """Fit one shared weight set across many scenarios (one step per scenario per epoch)."""
    model = model.copy()
    model.dropout_rate = config.dropout
    rng = np.random.default_rng(config.rng_seed)
    opt = Adam(model.weights, lr=config.learning_rate)
    lam, tau = config.lambda_init, config.tau_init
    for epoch in range(epochs):
        total = 0.0
        for problem in problems:
            out, cache = forward(model, problem.batch, training=True, rng=rng, return_cache=True)
            terms = joint_loss(out, problem.start, problem.d_tr, problem.v_max, lam, tau)
            opt.step(backward(model, cache, terms.grad))
            if config.gradnorm_enabled:
                lam, tau = gradnorm_update(model, cache, terms, lam, tau, config.gradnorm_rate)
            total += terms.total
        if log is not None:
            log(epoch, total / max(len(problems), 1), lam, tau)
    model.epsilon = problems[-1].batch.epsilon if problems else model.epsilon
    return model


def gc_recover(
    usnet: Usnet,
    scenario: DamageScenario,
    config: SwarmConfig,
    model: GcnModel,
    train_config: TrainConfig = TrainConfig(),
    hops: HopMatrix | None = None,
    record_trajectories: bool = False,
):
    """Train on the scenario, then fly the chosen targets until connected.

    Returns (RecoveryResult, GcSolution, history).
    """
    problem = build_problem(usnet, scenario, config, hops)
    _, solution, history = train(model, problem, train_config)
    policy = gc_velocity_schedule(solution, problem.start, config.v_max, config.dt)
    result = simulate(
        problem.start,
        policy,
        config,
        max_steps=target_step_budget(problem.start, solution.target_positions, config),
        record_trajectories=record_trajectories,
        algo_tag="gc",
        info={"k_star": solution.k_star, "fallback_used": solution.fallback_used,
              "planned_t_rc": float(arrival_times(solution, problem.start, config.v_max).max(initial=0.0))},
    )
    return result, solution, history


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

MAGIC = b"SWGC"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII4d")


def save_model(model: GcnModel, path: str | Path) -> None:
    """Little-endian: magic, version, L, d_s, eps, coordinate_scale, dropout,
    negative_slope, then every weight matrix row-major as float64."""
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, model.num_layers, model.hidden_dim,
                          model.epsilon, model.coordinate_scale, model.dropout_rate, model.negative_slope)
    with open(path, "wb") as fh:
        fh.write(header)
        for w in model.weights:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def _layer_shapes(num_layers: int, hidden_dim: int) -> list[tuple[int, int]]:
    dims = [2] + [hidden_dim] * (num_layers - 1) + [2]
    return list(zip(dims, dims[1:]))


def load_model(path: str | Path, num_layers: int | None = None, hidden_dim: int | None = None) -> GcnModel:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError("file too short for a model header")
    magic, version, L, d_s, eps, scale, dropout, slope = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {version}")
    if num_layers is not None and L != num_layers:
        raise FormatError(f"model has {L} layers, expected {num_layers}")
    if hidden_dim is not None and d_s != hidden_dim:
        raise FormatError(f"model has hidden width {d_s}, expected {hidden_dim}")
    shapes = _layer_shapes(L, d_s)
    expected = _HEADER.size + 8 * sum(a * b for a, b in shapes)
    if len(data) != expected:
        raise FormatError(f"payload is {len(data)} bytes, header implies {expected}")
    weights, offset = [], _HEADER.size
    for a, b in shapes:
        w = np.frombuffer(data, dtype="<f8", count=a * b, offset=offset).reshape(a, b).astype(np.float64)
        weights.append(w)
        offset += 8 * a * b
    return GcnModel(weights, dropout, eps, scale, slope)
