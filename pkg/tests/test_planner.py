import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from guided_dynamics.core import ParticleState, PointCloud, PushAction
from guided_dynamics.egnn import init_params
from guided_dynamics.errors import InvalidInputError, PlanningError
from guided_dynamics.guidance import ConvergenceSpec, PidGains
from guided_dynamics.physics import SimConfig
from guided_dynamics.planner import (CemConfig, DynamicsModel, Goal, cem_minimize, cem_plan, mpc_loop,
                                     rollout)
from guided_dynamics.worlds import World, WorldSpec


@pytest.fixture(scope="module")
def world():
    return World.create(WorldSpec("tblock"))


def model_for(world, coord_init=0.0, iters=100):
    n = world.model_graph
    p = init_params(1, 8, seed=0, coord_init=coord_init, coord_scale=0.1, dist_scale=0.1)
    return DynamicsModel(p, n, world.model_cfg, PidGains(), ConvergenceSpec(1e-3, iters))


def test_config_validation():
    with pytest.raises(InvalidInputError):
        CemConfig(n_samples=0)
    with pytest.raises(InvalidInputError):
        CemConfig(elite_frac=0.0)
    with pytest.raises(InvalidInputError):
        CemConfig(min_std=0.0)
    assert CemConfig(n_samples=500, elite_frac=0.1).n_elite == 50


def test_cem_recovers_one_dimensional_optimum():
    target = 0.737
    history = []
    cfg = CemConfig(n_samples=100, n_iters=30, init_std=1.0)
    best, cost = cem_minimize(lambda a: (a[:, 0] - target) ** 2, [0.0], 1.0, [-5.0], [5.0], cfg,
                              np.random.default_rng(0), history)
    assert abs(best[0] - target) <= 1e-3
    assert len(history) <= 30


@given(st.integers(0, 2**31))
def test_cem_best_cost_never_increases(seed):
    r = np.random.default_rng(seed)
    centre = r.normal(size=4)
    history = []
    cem_minimize(lambda a: np.sum(np.abs(a - centre), axis=1) + r.normal(size=len(a)) * 0,
                 np.zeros(4), 0.5, -3 * np.ones(4), 3 * np.ones(4),
                 CemConfig(n_samples=20, n_iters=10), np.random.default_rng(seed), history)
    assert all(b <= a for a, b in zip(history, history[1:]))


def test_cem_all_failures_raise():
    with pytest.raises(PlanningError):
        cem_minimize(lambda a: np.full(len(a), np.nan), [0.0], 1.0, [-1.0], [1.0],
                     CemConfig(n_samples=10, n_iters=2), np.random.default_rng(0))


def test_rollout_empty_and_guided_feasibility(world):
    state = world.state
    m = model_for(world, coord_init=2.0)
    assert rollout(state, m.graph, [], m, guided=True) == [state]
    c = state.positions[:, :2].mean(axis=0)
    acts = [PushAction(tuple(c - [0.8, 0.0]), tuple(c + [0.2, 0.0])),
            PushAction(tuple(c - [0.0, 0.9]), tuple(c + [0.0, 0.1]))]
    raw = rollout(state, m.graph, acts, m, guided=False)
    guided = rollout(state, m.graph, acts, m, guided=True)
    assert len(guided) == 3
    for r, g in zip(raw[1:], guided[1:]):
        assert g.positions[:, 2].min() >= -1e-9
        raw_strain = m.graph.strain(r.positions).max()
        if raw_strain > 0.05:
            assert m.graph.strain(g.positions).max() <= raw_strain + 1e-6
        assert np.all(r.velocities == 0)


def test_rollout_accepts_bare_params(world):
    p = init_params(1, 4, seed=1)
    acts = [PushAction((0.0, -2.0), (0.0, -1.5))]
    out = rollout(world.state, world.model_graph, acts, p, guided=False)
    assert np.array_equal(out[1].positions, world.state.positions)


def test_plan_is_deterministic_and_goal_at_start_costs_nothing(world):
    m = model_for(world)
    goal = Goal(world.observe())
    cfg = CemConfig(n_samples=16, n_iters=2)
    a1, c1 = cem_plan(world.state, m.graph, goal, m, cfg, seed=4, guided=False)
    a2, c2 = cem_plan(world.state, m.graph, goal, m, cfg, seed=4, guided=False)
    assert a1 == a2 and c1 == c2
    assert c1 == pytest.approx(0.0, abs=1e-12)
    _, cg = cem_plan(world.state, m.graph, goal, m, cfg, seed=4, guided=True)
    assert cg <= 1e-2


def test_mpc_goal_already_met(world):
    world.reset(world.state.positions)
    rec = mpc_loop(world, None, Goal(world.observe()), model_for(world), CemConfig(n_samples=8, n_iters=1),
                   max_steps=5, seed=0)
    assert rec.success and rec.steps == 0 and rec.chamfer == [] and rec.actions == []


def test_mpc_records_one_chamfer_per_action(world):
    x0 = world.state.positions.copy()
    goal_pts = x0 + [0.4, 0.0, 0.0]
    rec = mpc_loop(world, None, Goal(PointCloud(goal_pts), 0.01, goal_pts), model_for(world),
                   CemConfig(n_samples=8, n_iters=1), max_steps=2, seed=[1, 2], guided=False)
    assert rec.steps == len(rec.chamfer) == len(rec.particle_distance) == len(rec.actions) <= 2
    assert rec.initial_chamfer > 0
    world.reset(x0)
    with pytest.raises(InvalidInputError):
        mpc_loop(world, None, Goal(PointCloud(goal_pts)), model_for(world), CemConfig(), max_steps=0, seed=0)
