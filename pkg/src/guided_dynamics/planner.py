"""Hierarchical rollouts (network prediction, optionally guided through the
spring-mass model), CEM action search and the receding-horizon loop."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .actions import action_is_valid, canonical_arrays
from .core import ParticleState, PointCloud, PushAction, SpringGraph
from .egnn import EgnnParams, egnn_forward
from .errors import InvalidInputError, NumericError, PlanningError
from .guidance import ConvergenceSpec, PidGains, track_batch
from .metrics import chamfer_batch, chamfer_distance, particle_distance
from .physics import SimConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CemConfig:
    n_samples: int = 500
    n_iters: int = 30
    elite_frac: float = 0.1
    horizon: int = 1
    init_std: float = 0.25
    min_std: float = 1e-3
    action_bound: float = 1.5  # half-width of the box around the object centroid
    max_push: float = 0.6
    contact_radius: float = 0.08
    invalid_penalty: float = 10.0
    duration: float = 1.0

    def __post_init__(self):
        n_elite = int(np.ceil(self.elite_frac * self.n_samples))
        if not (0 < self.elite_frac <= 1) or self.n_samples < n_elite or n_elite < 1:
            raise InvalidInputError("need n_samples >= elites >= 1 and elite_frac in (0, 1]")
        if self.init_std <= 0 or self.min_std <= 0 or self.horizon < 1 or self.n_iters < 1:
            raise InvalidInputError("std, horizon and n_iters must be positive")

    @property
    def n_elite(self) -> int:
        return int(np.ceil(self.elite_frac * self.n_samples))


@dataclass(frozen=True)
class Goal:
    cloud: PointCloud
    success_threshold: float = 0.1
    particles: np.ndarray | None = None  # paired goal positions, when known

    def __post_init__(self):
        if not isinstance(self.cloud, PointCloud):
            object.__setattr__(self, "cloud", PointCloud(self.cloud))


@dataclass
class DynamicsModel:
    """Everything a rollout needs besides the state: network, nominal springs, guidance."""

    params: EgnnParams
    graph: SpringGraph
    cfg: SimConfig
    gains: PidGains = field(default_factory=PidGains)
    convergence: ConvergenceSpec = field(default_factory=ConvergenceSpec)

    @property
    def edges(self) -> np.ndarray:
        return self.graph.pairs


def predict_batch(x, starts, ends, model: DynamicsModel, masses, guided: bool) -> np.ndarray:
    """One action for a batch: x (B, N, 3), starts/ends (B, 2) -> next positions (B, N, 3)."""
    feats = canonical_arrays(x, starts, ends, model.cfg.ground_height)
    pred = egnn_forward(x, feats, model.edges, model.params)
    if not guided:
        return pred
    out, _, _, _ = track_batch(x, np.zeros_like(x), masses, model.graph, pred, model.gains,
                               model.convergence, model.cfg, raise_on_divergence=False)
    return out


def rollout_batch(x0, masses, starts, ends, model: DynamicsModel, guided: bool, keep_all=False):
    """Chain actions: starts/ends (B, H, 2). Returns final (B, N, 3) or all (B, H, N, 3)."""
    starts = np.asarray(starts, dtype=np.float64)
    ends = np.asarray(ends, dtype=np.float64)
    b, h = starts.shape[:2]
    x = np.broadcast_to(np.asarray(x0, dtype=np.float64), (b,) + np.shape(x0)[-2:]).copy()
    states = []
    for t in range(h):
        x = predict_batch(x, starts[:, t], ends[:, t], model, masses, guided)
        if keep_all:
            states.append(x)
    return np.stack(states, axis=1) if keep_all else x


def rollout(state: ParticleState, graph: SpringGraph, actions, model, guided: bool,
            gains: PidGains | None = None, spec: ConvergenceSpec | None = None,
            cfg: SimConfig | None = None) -> list[ParticleState]:
    """Autoregressive prediction over ``actions``; returns the initial state plus one per action."""
    if isinstance(model, EgnnParams):
        model = DynamicsModel(model, graph, cfg or SimConfig(friction=0.0), gains or PidGains(),
                              spec or ConvergenceSpec())
    out = [state]
    if not actions:
        return out
    starts = np.array([[a.start for a in actions]])
    ends = np.array([[a.end for a in actions]])
    traj = rollout_batch(state.positions, state.masses, starts, ends, model, guided, keep_all=True)[0]
    for x in traj:
        out.append(ParticleState(x, np.zeros_like(x), state.masses))
    return out


def cem_minimize(cost_fn, mean, std, lower, upper, config: CemConfig, rng, history=None):
    """Diagonal-Gaussian cross-entropy search with elitism.

    ``cost_fn`` maps (B, D) samples to (B,) costs. Returns (best, best_cost).
    """
    mean = np.array(mean, dtype=np.float64)
    std = np.broadcast_to(np.asarray(std, dtype=np.float64), mean.shape).copy()
    best, best_cost = None, np.inf
    for it in range(config.n_iters):
        samples = mean + std * rng.standard_normal((config.n_samples, mean.size))
        samples = np.clip(samples, lower, upper)
        if best is not None:
            samples[0] = best
        costs = np.asarray(cost_fn(samples), dtype=np.float64)
        finite = np.isfinite(costs)
        if not np.any(finite):
            raise PlanningError(f"every candidate failed in CEM iteration {it}")
        costs = np.where(finite, costs, np.inf)
        order = np.argsort(costs, kind="stable")
        if costs[order[0]] < best_cost:
            best_cost = float(costs[order[0]])
            best = samples[order[0]].copy()
        elites = samples[order[:config.n_elite]]
        mean = elites.mean(axis=0)
        std = np.maximum(elites.std(axis=0), config.min_std)
        if history is not None:
            history.append(best_cost)
    return best, best_cost


def _terminal_chamfer(x, masses, s, e, model, guided, goal_pts):
    """Chamfer of each candidate's terminal state; candidates whose rollout blows up cost inf."""
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            return chamfer_batch(rollout_batch(x, masses, s, e, model, guided), goal_pts)
        except NumericError:
            out = np.full(len(s), np.inf)
            for k in range(len(s)):
                try:
                    out[k] = chamfer_batch(rollout_batch(x, masses, s[k:k + 1], e[k:k + 1], model, guided),
                                           goal_pts)[0]
                except NumericError:
                    pass
            return out


def _initial_mean(x, goal_pts, config: CemConfig):
    c = x[:, :2].mean(axis=0)
    delta = goal_pts[:, :2].mean(axis=0) - c
    dist = float(np.linalg.norm(delta))
    u = delta / dist if dist > 1e-6 else np.array([1.0, 0.0])
    rear = float(np.max((c - x[:, :2]) @ u))
    s = c - u * (rear + config.contact_radius + 0.02)
    e = s + u * min(config.max_push, config.contact_radius + 0.02 + max(dist, 0.05))
    return np.concatenate([s, e])


def cem_plan(state: ParticleState, graph: SpringGraph, goal: Goal, model: DynamicsModel,
             config: CemConfig, seed, guided: bool = True, history=None):
    """Best action sequence (and its predicted chamfer cost) toward ``goal``."""
    if model.graph is not graph and graph is not None:
        model = DynamicsModel(model.params, graph, model.cfg, model.gains, model.convergence)
    rng = np.random.default_rng(seed)
    x = np.asarray(state.positions)
    goal_pts = goal.cloud.points
    c = x[:, :2].mean(axis=0)
    H = config.horizon
    lower = np.tile(np.r_[c, c] - config.action_bound, H)
    upper = np.tile(np.r_[c, c] + config.action_bound, H)
    mean = np.tile(_initial_mean(x, goal_pts, config), H)

    def cost(samples):
        seq = samples.reshape(len(samples), H, 2, 2)
        s, e = seq[:, :, 0].copy(), seq[:, :, 1].copy()
        d = e - s
        length = np.linalg.norm(d, axis=-1)
        too_long = length > config.max_push
        e = np.where(too_long[..., None], s + d * (config.max_push / np.maximum(length, 1e-12))[..., None], e)
        short = np.linalg.norm(e - s, axis=-1) < 1e-6
        e = np.where(short[..., None], s + np.array([1e-6, 0.0]), e)
        valid = action_is_valid(s[:, 0], e[:, 0], x, config.contact_radius)
        cd = _terminal_chamfer(x, state.masses, s, e, model, guided, goal_pts)
        return np.where(valid, cd, cd + config.invalid_penalty)

    best, best_cost = cem_minimize(cost, mean, config.init_std, lower, upper, config, rng, history)
    seq = best.reshape(H, 2, 2)
    actions = []
    for s, e in seq:
        d = e - s
        n = float(np.linalg.norm(d))
        if n > config.max_push:
            e = s + d * config.max_push / n
        if n < 1e-6:
            e = s + np.array([1e-6, 0.0])
        actions.append(PushAction(tuple(s), tuple(e), config.duration))
    return actions, best_cost


@dataclass
class EpisodeRecord:
    """Metrics after every executed action, plus the pre-episode values."""

    initial_chamfer: float
    initial_distance: float | None
    chamfer: list
    particle_distance: list
    success: bool
    steps: int
    actions: list
    wall_ms: list

    @property
    def final_chamfer(self) -> float:
        return self.chamfer[-1] if self.chamfer else self.initial_chamfer

    @property
    def final_distance(self):
        return self.particle_distance[-1] if self.particle_distance else self.initial_distance

    def to_dict(self) -> dict:
        return {"initial_chamfer": self.initial_chamfer, "initial_distance": self.initial_distance,
                "chamfer": self.chamfer, "particle_distance": self.particle_distance,
                "success": self.success, "steps": self.steps,
                "actions": [a.to_dict() for a in self.actions], "wall_ms": self.wall_ms}


def mpc_loop(world, graph: SpringGraph, goal: Goal, model: DynamicsModel, config: CemConfig,
             max_steps: int, seed, guided: bool = True) -> EpisodeRecord:
    """Replan, execute one action in the world, observe; stop once the goal is reached."""
    if max_steps < 1:
        raise InvalidInputError("max_steps must be >= 1")
    graph = graph if graph is not None else model.graph

    def measure():
        obs = world.observe()
        cd = chamfer_distance(obs, goal.cloud)
        pd = particle_distance(obs, goal.particles) if goal.particles is not None else None
        return cd, pd

    cd, pd = measure()
    cd0, pd0 = cd, pd
    chamfers, dists, actions, walls = [], [], [], []
    steps = 0
    while cd > goal.success_threshold and steps < max_steps:
        t0 = time.perf_counter()
        state = ParticleState.at_rest(world.observe().points)
        plan, _ = cem_plan(state, graph, goal, model, config, [*np.atleast_1d(seed), steps], guided)
        world.simulate_action(plan[0])
        steps += 1
        actions.append(plan[0])
        cd, pd = measure()
        chamfers.append(cd)
        if pd is not None:
            dists.append(pd)
        walls.append((time.perf_counter() - t0) * 1e3)
        log.info("mpc step=%d chamfer=%.4f", steps, cd)
    return EpisodeRecord(cd0, pd0, chamfers, dists, cd <= goal.success_threshold, steps, actions, walls)
