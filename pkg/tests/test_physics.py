import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from guided_dynamics.core import ParticleState, SpringGraph, build_graph
from guided_dynamics.errors import DegenerateSpringWarning, InvalidInputError, NumericError
from guided_dynamics.physics import (ForceField, SimConfig, euler_step, force_arrays, net_forces,
                                     read_trajectory, simulate, spring_edge_forces, spring_force,
                                     step_arrays, write_trajectory)
from helpers import hooke_sum, rot_z

FREE = SimConfig(gravity=0.0, ground_height=-1e9)


def test_hooke_examples():
    assert np.array_equal(spring_force([0, 0, 0], [2, 0, 0], 10, 1), [10, 0, 0])
    assert np.array_equal(spring_force([0, 0, 0], [1, 0, 0], 10, 1), [0, 0, 0])
    assert np.array_equal(spring_force([0, 0, 0], [0.5, 0, 0], 10, 1), [-5, 0, 0])


def test_coincident_spring_warns_and_is_zero():
    with pytest.warns(DegenerateSpringWarning):
        assert np.array_equal(spring_force([1, 1, 1], [1, 1, 1], 10, 1), np.zeros(3))
    g = SpringGraph([0], [1], [10.0], [1.0], 1.0)
    with pytest.warns(DegenerateSpringWarning):
        f = spring_edge_forces(np.zeros((2, 3)), g)
    assert np.all(np.isfinite(f)) and np.all(f == 0)


@given(arrays(np.float64, (2, 3), elements=st.floats(-5, 5)), st.floats(0.1, 100), st.floats(0, 3))
def test_newton_pair_antisymmetry_exact(x, k, r):
    if np.linalg.norm(x[0] - x[1]) <= 1e-6:
        return
    assert np.array_equal(spring_force(x[0], x[1], k, r), -spring_force(x[1], x[0], k, r))


def test_gravity_only():
    s = ParticleState.at_rest([[0, 0, 1.0]])
    f = net_forces(s, SpringGraph([], [], [], [], 1.0, 1), ForceField.zeros(1), SimConfig())
    assert np.allclose(f.per_particle, [[0, 0, -9.81]], atol=0, rtol=1e-15)


def test_resting_pair_has_zero_net_force():
    s = ParticleState.at_rest([[0, 0, 0], [1, 0, 0]])
    g = build_graph(s.positions, 1.5, 100.0, 0.98)
    f = net_forces(s, g, ForceField.zeros(2), SimConfig())
    assert np.array_equal(f.per_particle, np.zeros((2, 3)))


def test_chain_force_matches_brute_force(rng):
    x = rng.normal(size=(3, 3))
    edges = [(0, 1, 7.0, 0.4), (1, 2, 3.0, 1.3)]
    g = SpringGraph([0, 1], [1, 2], [7.0, 3.0], [0.4, 1.3], 1.0)
    f = net_forces(ParticleState.at_rest(x), g, ForceField.zeros(3), FREE)
    assert np.allclose(f.per_particle, hooke_sum(x, edges), rtol=1e-12, atol=1e-12)


def test_net_forces_rejects_mismatch():
    s = ParticleState.at_rest(np.zeros((2, 3)) + [[0, 0, 0], [1, 0, 0]])
    with pytest.raises(InvalidInputError):
        net_forces(s, SpringGraph([0], [1], [1.0], [1.0], 1.0), ForceField.zeros(3), SimConfig())


def test_euler_examples():
    s = ParticleState.at_rest([[0, 0, 5.0]])
    g = SpringGraph([], [], [], [], 1.0, 1)
    out = euler_step(s, ForceField([[1.0, 0, 0]]), g, SimConfig(dt=0.1, ground_height=-10))
    assert np.allclose(out.velocities, [[0.1, 0, 0]], rtol=0, atol=1e-15)
    assert np.allclose(out.positions - s.positions, [[0.01, 0, 0]], rtol=0, atol=1e-15)
    s2 = ParticleState([[0, 0, 5.0]], [[1.0, 0, 0]], [1.0])
    out2 = euler_step(s2, ForceField.zeros(1), g.with_params(damping=0.9), SimConfig(dt=0.37, ground_height=-10))
    assert np.allclose(out2.velocities, [[0.9, 0, 0]], rtol=0, atol=1e-15)


def test_euler_non_finite_names_particle():
    s = ParticleState.at_rest(np.zeros((3, 3)))
    f = np.zeros((3, 3))
    f[2, 1] = np.inf
    with pytest.raises(NumericError, match="particle 2") as exc:
        euler_step(s, ForceField(f), SpringGraph([], [], [], [], 1.0, 3), SimConfig())
    assert exc.value.where == 2


def _grid(n=4, spacing=0.1):
    g = np.stack(np.meshgrid(np.arange(n), np.arange(n)), -1).reshape(-1, 2) * spacing
    return np.c_[g, np.zeros(len(g))]


def test_equilibrium_fixed_point():
    x = _grid()
    g = build_graph(x, 0.15, 500.0, 0.98)
    s = ParticleState.at_rest(x)
    for cfg in (SimConfig(), SimConfig(dt=0.003, friction=0.0)):
        out = euler_step(s, net_forces(s, g, None, cfg), g, cfg)
        assert np.abs(out.positions - x).max() <= 1e-12
        assert np.abs(out.velocities).max() <= 1e-12


def test_simulate_contract():
    x = _grid()
    g = build_graph(x, 0.15, 500.0, 0.98)
    s = ParticleState.at_rest(x)
    assert simulate(s, g, None, 0, SimConfig()) == [s]
    traj = simulate(s, g, lambda t: ForceField.zeros(len(x)), 20, SimConfig())
    assert len(traj) == 21
    assert all(np.abs(t.positions - x).max() <= 1e-12 for t in traj)
    with pytest.raises(InvalidInputError):
        simulate(s, g, None, -1, SimConfig())


def _oscillator_energy(x, v, k=10.0, r=1.0):
    d = np.linalg.norm(x[1] - x[0])
    return 0.5 * np.sum(v * v) + 0.5 * k * (d - r) ** 2


def _reference_oscillator(stretch, dt, t_end, k=10.0):
    """Independent scalar integrator on the relative coordinate (reduced mass 1/2)."""
    q, p = stretch, 0.0
    n = int(round(t_end / dt))
    for _ in range(n):
        p += -2.0 * k * q * dt
        q += p * dt
    return q, p


def test_oscillator_energy_drift_under_five_percent():
    k, dt = 10.0, 0.005
    period = 2 * np.pi / np.sqrt(2 * k)
    x0 = np.array([[0.0, 0, 0], [1.3, 0, 0]])
    s = ParticleState.at_rest(x0)
    g = SpringGraph([0], [1], [k], [1.0], 1.0)
    cfg = SimConfig(dt=dt, gravity=0.0, ground_height=-1e9)
    n = int(round(period / dt))
    traj = simulate(s, g, None, n, cfg)
    e0 = _oscillator_energy(x0, np.zeros((2, 3)))
    drift = max(abs(_oscillator_energy(t.positions, t.velocities) - e0) for t in traj) / e0
    assert drift < 0.05
    # the fine-step reference lands back near its start after one period
    q, _ = _reference_oscillator(0.3, 1e-5, n * dt)
    d_end = np.linalg.norm(traj[-1].positions[1] - traj[-1].positions[0]) - 1.0
    assert abs(d_end - q) < 0.05 * 0.3


@given(st.integers(0, 2**31))
def test_momentum_conserved_without_ground(seed):
    r = np.random.default_rng(seed)
    x = r.uniform(0, 1, size=(8, 3))
    g = build_graph(x, 0.8, r.uniform(1, 100), 1.0)
    m = r.uniform(0.5, 2.0, size=8)
    x = x + r.normal(scale=0.05, size=x.shape)
    v = r.normal(size=(8, 3))
    for _ in range(20):
        p0 = (m[:, None] * v).sum(axis=0)
        f, sup = force_arrays(x, m, g, None, FREE)
        x, v = step_arrays(x, v, m, f, sup, 1.0, FREE)
        assert np.abs((m[:, None] * v).sum(axis=0) - p0).max() <= 1e-12


@given(st.integers(0, 2**31), st.floats(0, 1), st.floats(0, 1))
def test_ground_never_penetrated(seed, restitution, friction):
    r = np.random.default_rng(seed)
    cfg = SimConfig(dt=0.01, restitution=restitution, friction=friction, ground_height=r.uniform(-1, 1))
    x = r.uniform(-1, 1, size=(6, 3)) + [0, 0, cfg.ground_height + 0.5]
    g = build_graph(x, 1.0, 50.0, 0.98)
    v = r.normal(scale=3.0, size=x.shape)
    m = np.ones(6)
    for _ in range(30):
        f, sup = force_arrays(x, m, g, r.normal(scale=50.0, size=x.shape), cfg)
        x, v = step_arrays(x, v, m, f, sup, g.damping, cfg)
        assert x[:, 2].min() >= cfg.ground_height - 1e-9


@given(st.floats(-np.pi, np.pi), st.integers(0, 2**31))
def test_physics_commutes_with_planar_rotation(theta, seed):
    r = np.random.default_rng(seed)
    R = rot_z(theta)
    x = r.uniform(0, 1, size=(6, 3))
    x[:, 2] = np.abs(x[:, 2]) * 0.2
    g = build_graph(x, 0.9, 80.0, 0.97)
    x = x + r.normal(scale=0.05, size=x.shape)
    x[:, 2] = np.maximum(x[:, 2], 0)
    v = r.normal(size=x.shape)
    m = np.ones(6)
    cfg = SimConfig(friction=0.4)
    a, va = x.copy(), v.copy()
    b, vb = x @ R.T, v @ R.T
    for _ in range(10):
        f, s = force_arrays(a, m, g, None, cfg)
        a, va = step_arrays(a, va, m, f, s, g.damping, cfg)
        f, s = force_arrays(b, m, g, None, cfg)
        b, vb = step_arrays(b, vb, m, f, s, g.damping, cfg)
        assert np.abs(b - a @ R.T).max() <= 1e-9


def test_trajectory_round_trip(tmp_path):
    x = _grid(2)
    g = build_graph(x, 0.15, 500.0, 0.98)
    traj = simulate(ParticleState.at_rest(x + [0, 0, 0.2]), g, None, 5, SimConfig())
    write_trajectory(tmp_path / "t.jsonl", traj)
    back = read_trajectory(tmp_path / "t.jsonl")
    assert len(back) == 6
    assert all(np.array_equal(a.positions, b.positions) and np.array_equal(a.velocities, b.velocities)
               for a, b in zip(traj, back))
