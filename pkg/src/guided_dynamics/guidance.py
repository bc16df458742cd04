"""Per-particle PID tracking of setpoints through the spring-mass model.

Used twice: to fit the model to observed point clouds (training targets) and
to pull the model toward a network prediction while springs and the ground
keep the result physically feasible.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .core import ParticleState, PointCloud, SpringGraph
from .errors import DivergenceError, InvalidInputError, NumericError
from .physics import SimConfig, force_arrays, step_arrays

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PidGains:
    """Gains per unit particle mass."""

    kp: float = 50.0
    ki: float = 1.0
    kd: float = 10.0

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0 or max(self.kp, self.ki, self.kd) <= 0:
            raise InvalidInputError("PID gains must be >= 0 with at least one positive")


@dataclass(frozen=True)
class ConvergenceSpec:
    tol: float = 1e-3
    max_iters: int = 2000
    divergence_factor: float = 1e3

    def __post_init__(self):
        if self.tol <= 0 or self.max_iters < 1:
            raise InvalidInputError("need tol > 0 and max_iters >= 1")


def default_integral_clamp(gains: PidGains, tol: float) -> float:
    # integral force capped at ten times the proportional force at tolerance
    if gains.ki == 0:
        return np.inf
    return 10.0 * gains.kp * tol / gains.ki if gains.kp > 0 else 10.0 * tol


@dataclass
class PidControllerBank:
    gains: PidGains
    integral: np.ndarray
    prev_error: np.ndarray
    integral_clamp: float

    @classmethod
    def create(cls, n: int, gains: PidGains, integral_clamp: float, initial_error=None):
        prev = np.zeros((n, 3)) if initial_error is None else np.array(initial_error, dtype=float)
        return cls(gains, np.zeros((n, 3)), prev, float(integral_clamp))


def pid_force(bank: PidControllerBank, i: int, error, dt: float):
    """PID output (per unit mass) for particle ``i``; returns (force, (integral_i, prev_error_i))."""
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    e = np.asarray(error, dtype=np.float64)
    if not np.all(np.isfinite(e)):
        raise NumericError(f"non-finite error for particle {i}", where=i)
    g = bank.gains
    integ = np.clip(bank.integral[i] + e * dt, -bank.integral_clamp, bank.integral_clamp)
    f = g.kp * e + g.ki * integ + g.kd * (e - bank.prev_error[i]) / dt
    bank.integral[i] = integ
    bank.prev_error[i] = e
    return f, (integ.copy(), e.copy())


def nearest_point_setpoints(state_or_positions, observed) -> np.ndarray:
    """Closest observed point for each particle; ties go to the lowest point index."""
    x = np.asarray(getattr(state_or_positions, "positions", state_or_positions), dtype=np.float64)
    pts = np.asarray(getattr(observed, "points", observed), dtype=np.float64)
    if pts.ndim != 2 or len(pts) == 0:
        raise InvalidInputError("observed cloud is empty")
    d2 = np.sum((x[..., :, None, :] - pts[None, :, :]) ** 2, axis=-1)
    return pts[np.argmin(d2, axis=-1)]


def track_batch(x, v, masses, graph: SpringGraph, setpoints, gains: PidGains,
                spec: ConvergenceSpec, cfg: SimConfig, integral_clamp=None, raise_on_divergence=True,
                cloud=None, reassign_every: int = 25):
    """Track setpoints for a batch of states of shape (B, N, 3).

    A sample stops evolving once its mean setpoint error reaches ``spec.tol``.
    With ``cloud`` given, setpoints are re-matched to the nearest cloud point every
    ``reassign_every`` iterations; controller state carries over.
    Returns ``(x, v, converged, iters)`` with per-sample flags and counts.
    """
    x = np.array(x, dtype=np.float64)
    v = np.array(v, dtype=np.float64)
    if cloud is not None:
        sp = nearest_point_setpoints(x, cloud)
    else:
        sp = np.broadcast_to(np.asarray(setpoints, dtype=np.float64), x.shape).copy()
    m = np.broadcast_to(np.asarray(masses, dtype=np.float64), x.shape[:-1])
    b = x.shape[0]
    clamp = default_integral_clamp(gains, spec.tol) if integral_clamp is None else integral_clamp
    err = sp - x
    err0 = np.linalg.norm(err, axis=-1).mean(axis=-1)
    limit = spec.divergence_factor * np.maximum(err0, spec.tol)
    integral = np.zeros_like(x)
    prev = err.copy()
    active = np.ones(b, dtype=bool)
    converged = np.zeros(b, dtype=bool)
    iters = np.zeros(b, dtype=np.int64)
    dt = cfg.dt
    for it in range(1, spec.max_iters + 1):
        idx = np.flatnonzero(active)
        if cloud is not None and it % reassign_every == 0:
            sp[idx] = nearest_point_setpoints(x[idx], cloud)
            err[idx] = sp[idx] - x[idx]
        xa, va, ea = x[idx], v[idx], err[idx]
        integral[idx] = np.clip(integral[idx] + ea * dt, -clamp, clamp)
        pid = gains.kp * ea + gains.ki * integral[idx] + gains.kd * (ea - prev[idx]) / dt
        prev[idx] = ea
        ext = pid * m[idx][..., None]
        f, support = force_arrays(xa, m[idx], graph, ext, cfg)
        if not np.all(np.isfinite(f)):
            raise NumericError(f"non-finite force during tracking at iteration {it}")
        xa, va = step_arrays(xa, va, m[idx], f, support, graph.damping, cfg)
        x[idx], v[idx] = xa, va
        ea = sp[idx] - xa
        err[idx] = ea
        mean_err = np.linalg.norm(ea, axis=-1).mean(axis=-1)
        iters[idx] = it
        if raise_on_divergence and np.any(mean_err > limit[idx]):
            raise DivergenceError(
                f"tracking diverged at iteration {it} with gains kp={gains.kp}, ki={gains.ki}, kd={gains.kd}")
        done = mean_err <= spec.tol
        if cloud is not None and np.any(done):
            # only accept a fit whose nearest-point matching is settled
            stable = np.all(nearest_point_setpoints(xa[done], cloud) == sp[idx[done]], axis=(-2, -1))
            done[np.flatnonzero(done)[~stable]] = False
        converged[idx[done]] = True
        active[idx[done]] = False
        if it % 100 == 0:
            log.debug("track iteration=%d mean_error=%.3g active=%d", it, float(mean_err.mean()), active.sum())
        if not np.any(active):
            break
    return x, v, converged, iters


def track_to_setpoints(state: ParticleState, graph: SpringGraph, setpoints, gains: PidGains,
                       spec: ConvergenceSpec, cfg: SimConfig):
    sp = np.asarray(setpoints, dtype=np.float64)
    if sp.shape != state.positions.shape:
        raise InvalidInputError(f"setpoints shape {sp.shape} != state shape {state.positions.shape}")
    x, v, conv, iters = track_batch(state.positions[None], state.velocities[None], state.masses,
                                    graph, sp[None], gains, spec, cfg)
    return ParticleState(x[0], v[0], state.masses), bool(conv[0]), int(iters[0])


def guided_step(state: ParticleState, graph: SpringGraph, egnn_pred, gains: PidGains,
                spec: ConvergenceSpec, cfg: SimConfig) -> ParticleState:
    """Pull the spring-mass model toward a predicted configuration."""
    out, _, _ = track_to_setpoints(state, graph, egnn_pred, gains, spec, cfg)
    return out


def guided_batch(x, masses, graph, preds, gains, spec, cfg):
    """Batched guidance from rest; returns guided positions (B, N, 3)."""
    x = np.asarray(x, dtype=np.float64)
    xb = np.broadcast_to(x, np.shape(preds)).copy()
    out, _, _, _ = track_batch(xb, np.zeros_like(xb), masses, graph, preds, gains, spec, cfg,
                               raise_on_divergence=False)
    return out


def track_cloud(state: ParticleState, graph: SpringGraph, cloud, gains: PidGains,
                spec: ConvergenceSpec, cfg: SimConfig, reassign_every: int = 25):
    """Fit the model to an observed cloud, re-matching nearest points as particles move."""
    pts = np.asarray(getattr(cloud, "points", cloud), dtype=np.float64)
    if pts.ndim != 2 or len(pts) == 0:
        raise InvalidInputError("observed cloud is empty")
    x, v, conv, iters = track_batch(state.positions[None], state.velocities[None], state.masses,
                                    graph, state.positions[None], gains, spec, cfg,
                                    cloud=pts, reassign_every=reassign_every)
    return ParticleState(x[0], v[0], state.masses), bool(conv[0]), int(iters[0])
