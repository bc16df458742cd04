"""Spring-mass model: Hookean springs, gravity, ground contact, damped Euler steps.

The array kernels (``spring_force_array``, ``contact_support``, ``step_arrays``)
accept leading batch dimensions so that many candidate states can be advanced
together; the ``ParticleState`` functions are thin wrappers over them.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import ParticleState, SpringGraph
from .errors import DegenerateSpringWarning, InvalidInputError, NumericError

DEGENERATE_EPS = 1e-9
CONTACT_EPS = 1e-9


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    gravity: float = 9.81
    ground_height: float = 0.0
    restitution: float = 0.0
    friction: float = 0.3

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidInputError("dt must be positive")
        if self.friction < 0:
            raise InvalidInputError("friction must be non-negative")
        if not 0 <= self.restitution <= 1:
            raise InvalidInputError("restitution must lie in [0, 1]")


@dataclass(frozen=True)
class ForceField:
    """Per-particle forces plus the ground support magnitude folded into them.

    ``support`` is what friction reads as the normal load; it stays zero for
    force fields assembled by hand.
    """

    per_particle: np.ndarray
    support: np.ndarray = field(default=None)

    def __post_init__(self):
        f = np.asarray(self.per_particle, dtype=np.float64)
        if f.ndim != 2 or f.shape[1] != 3:
            raise InvalidInputError(f"force field must be (N, 3), got {f.shape}")
        s = np.zeros(len(f)) if self.support is None else np.asarray(self.support, dtype=np.float64)
        object.__setattr__(self, "per_particle", f)
        object.__setattr__(self, "support", s)

    @classmethod
    def zeros(cls, n: int) -> "ForceField":
        return cls(np.zeros((n, 3)))


@lru_cache(maxsize=64)
def _incidence_cached(i_bytes, j_bytes, n):
    i = np.frombuffer(i_bytes, dtype=np.int64)
    j = np.frombuffer(j_bytes, dtype=np.int64)
    a = np.zeros((n, len(i)))
    a[i, np.arange(len(i))] = 1.0
    a[j, np.arange(len(j))] = -1.0
    return a


def incidence(graph: SpringGraph) -> np.ndarray:
    """(N, E) matrix with +1 at the edge's i end and -1 at its j end."""
    return _incidence_cached(graph.i.tobytes(), graph.j.tobytes(), graph.n_particles)


def spring_force(xi, xj, k: float, r: float) -> np.ndarray:
    """Force on particle i from the spring (i, j); the force on j is its negation."""
    xi = np.asarray(xi, dtype=np.float64)
    xj = np.asarray(xj, dtype=np.float64)
    delta = xj - xi
    d = float(np.linalg.norm(delta))
    if d <= DEGENERATE_EPS:
        warnings.warn("coincident particles on a spring; force set to zero", DegenerateSpringWarning)
        return np.zeros(3)
    return k * (d - r) * delta / d


def spring_edge_forces(x: np.ndarray, graph: SpringGraph) -> np.ndarray:
    """Per-edge force on the edge's i particle, shape (..., E, 3)."""
    delta = x[..., graph.j, :] - x[..., graph.i, :]
    d = np.sqrt(np.einsum("...k,...k->...", delta, delta))
    bad = d <= DEGENERATE_EPS
    if np.any(bad):
        warnings.warn(f"{int(bad.sum())} degenerate spring(s); force set to zero",
                      DegenerateSpringWarning)
        d = np.where(bad, 1.0, d)
    mag = graph.stiffness * (d - graph.rest_length) / d
    mag = np.where(bad, 0.0, mag)
    return mag[..., None] * delta


def spring_force_array(x: np.ndarray, graph: SpringGraph) -> np.ndarray:
    if graph.n_edges == 0:
        return np.zeros_like(x)
    return incidence(graph) @ spring_edge_forces(x, graph)


def contact_support(x: np.ndarray, f: np.ndarray, ground: float):
    """Normal force magnitude cancelling the downward load on grounded particles."""
    on = x[..., 2] <= ground + CONTACT_EPS
    return np.where(on, np.maximum(0.0, -f[..., 2]), 0.0)


def force_arrays(x, m, graph: SpringGraph, ext, cfg: SimConfig):
    """Net force (springs + gravity + ext + support) and the support magnitude."""
    f = spring_force_array(x, graph)
    f[..., 2] -= m * cfg.gravity
    if ext is not None:
        f = f + ext
    support = contact_support(x, f, cfg.ground_height)
    f[..., 2] += support
    return f, support


def step_arrays(x, v, m, f, support, damping: float, cfg: SimConfig):
    """Damped semi-implicit Euler step followed by ground projection and friction."""
    dt = cfg.dt
    inv_m = (1.0 / m)[..., None]
    v_new = damping * (v + f * inv_m * dt)
    x_new = x + v_new * dt
    ground = cfg.ground_height
    below = x_new[..., 2] < ground
    loaded = support > 0
    contact = below | loaded
    if not np.any(contact):
        return x_new, v_new
    # normal speed removed this step: penetration velocity plus the support impulse
    vn_in = np.where(below, np.maximum(0.0, -v_new[..., 2]), 0.0)
    vn = vn_in + damping * support / m * dt
    x_new[..., 2] = np.where(below, ground, x_new[..., 2])
    v_new[..., 2] = np.where(below & (v_new[..., 2] < 0), -cfg.restitution * v_new[..., 2], v_new[..., 2])
    if cfg.friction > 0:
        vt = np.hypot(v_new[..., 0], v_new[..., 1])
        scale = np.where(vt > 0, np.maximum(0.0, 1.0 - cfg.friction * vn / np.where(vt > 0, vt, 1.0)), 1.0)
        scale = np.where(contact, scale, 1.0)
        v_new[..., 0] *= scale
        v_new[..., 1] *= scale
    return x_new, v_new


def _check(state: ParticleState, forces: ForceField):
    if len(forces.per_particle) != state.n:
        raise InvalidInputError(f"force field has {len(forces.per_particle)} rows, state has {state.n}")


def net_forces(state: ParticleState, graph: SpringGraph, ext: ForceField, cfg: SimConfig) -> ForceField:
    if graph.n_particles > state.n:
        raise InvalidInputError("graph references more particles than the state holds")
    ext_arr = None
    if ext is not None:
        _check(state, ext)
        ext_arr = ext.per_particle
    f, support = force_arrays(np.array(state.positions), state.masses, graph, ext_arr, cfg)
    return ForceField(f, support)


def euler_step(state: ParticleState, forces: ForceField, graph: SpringGraph, cfg: SimConfig) -> ParticleState:
    _check(state, forces)
    f = forces.per_particle
    bad = ~np.all(np.isfinite(f), axis=1)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise NumericError(f"non-finite force on particle {idx}", where=idx)
    x, v = step_arrays(np.array(state.positions), np.array(state.velocities), state.masses,
                       f, forces.support, graph.damping, cfg)
    return ParticleState(x, v, state.masses)


def simulate(state: ParticleState, graph: SpringGraph, ext_schedule, n_steps: int,
             cfg: SimConfig) -> list[ParticleState]:
    """Roll out ``n_steps`` steps; ``ext_schedule(t)`` gives the external ForceField (or None)."""
    if n_steps < 0:
        raise InvalidInputError("n_steps must be >= 0")
    traj = [state]
    for t in range(n_steps):
        ext = ext_schedule(t) if ext_schedule is not None else None
        state = euler_step(state, net_forces(state, graph, ext, cfg), graph, cfg)
        traj.append(state)
    return traj


def write_trajectory(path, traj) -> None:
    with open(path, "w") as fh:
        for s in traj:
            fh.write(json.dumps(s.to_dict()) + "\n")


def read_trajectory(path) -> list[ParticleState]:
    with open(path) as fh:
        return [ParticleState.from_dict(json.loads(line)) for line in fh if line.strip()]
