"""Fast sanity checks behind ``guided-dynamics self-test``."""
from __future__ import annotations

import numpy as np

from ..actions import canonical_arrays
from ..core import ParticleState, build_graph
from ..egnn import backward, egnn_forward, init_params
from ..physics import SimConfig, force_arrays, step_arrays


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def check_invariance(rng, n=100):
    worst = 0.0
    for _ in range(n):
        x = rng.normal(size=(20, 3))
        s, e = rng.normal(size=2), rng.normal(size=2)
        R, g = _rot(rng.uniform(-np.pi, np.pi)), np.r_[rng.normal(size=2), 0.0]
        a = canonical_arrays(x, s, e)
        b = canonical_arrays(x @ R.T + g, R[:2, :2] @ s + g[:2], R[:2, :2] @ e + g[:2])
        worst = max(worst, float(np.abs(a - b).max()))
    return worst <= 1e-9, worst


def check_equivariance(rng, n=10):
    worst = 0.0
    for k in range(n):
        x = rng.uniform(0, 1, size=(12, 3))
        graph = build_graph(x, 0.5, 100.0, 0.98)
        p = init_params(2, 8, seed=k, coord_init=0.1)
        s, e = rng.normal(size=2), rng.normal(size=2)
        R, g = _rot(rng.uniform(-np.pi, np.pi)), np.r_[rng.normal(size=2), 0.0]
        y = egnn_forward(x, canonical_arrays(x, s, e), graph.pairs, p)
        xr = x @ R.T + g
        yr = egnn_forward(xr, canonical_arrays(xr, R[:2, :2] @ s + g[:2], R[:2, :2] @ e + g[:2]),
                          graph.pairs, p)
        worst = max(worst, float(np.abs(yr - (y @ R.T + g)).max() / max(np.abs(y).max(), 1e-12)))
    return worst <= 1e-6, worst


def check_gradient(rng):
    x = rng.uniform(0, 0.5, size=(2, 5, 3))
    graph = build_graph(x[0], 0.6, 100.0, 0.98)
    f = canonical_arrays(x, rng.normal(size=(2, 2)), rng.normal(size=(2, 2)))
    t = x + rng.normal(scale=0.05, size=x.shape)
    p = init_params(2, 6, seed=3, coord_init=0.1)
    grads, _ = backward((x, f, t), p, graph.pairs)
    flat, g = p.flat(), np.concatenate([grads[k].ravel() for k in p.names()])
    idx = rng.choice(flat.size, size=20, replace=False)
    h, worst = 1e-5, 0.0

    def total(v):
        q = p.copy().set_flat(v)
        return backward((x, f, t), q, graph.pairs)[1]

    for i in idx:
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        fd = (total(up) - total(dn)) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / max(abs(fd), abs(g[i]), 1e-8))
    return worst <= 1e-4, worst


def check_momentum(rng):
    x = rng.uniform(0, 1, size=(10, 3)) + np.array([0, 0, 2.0])
    graph = build_graph(x, 0.7, 50.0, 1.0)
    state = ParticleState.at_rest(x)
    cfg = SimConfig(gravity=0.0)
    xs, v = state.positions.copy(), rng.normal(size=(10, 3))
    p0 = v.sum(axis=0)
    for _ in range(50):
        f, sup = force_arrays(xs, state.masses, graph, np.zeros_like(xs), cfg)
        xs, v = step_arrays(xs, v, state.masses, f, sup, 1.0, cfg)
    drift = float(np.abs(v.sum(axis=0) - p0).max())
    return drift <= 1e-9, drift


CHECKS = {
    "canonical invariance": check_invariance,
    "network equivariance": check_equivariance,
    "gradient vs finite differences": check_gradient,
    "momentum conservation": check_momentum,
}


def run(seed: int = 0):
    """Returns [(name, passed, measured value)]."""
    rng = np.random.default_rng(seed)
    return [(name, *fn(rng)) for name, fn in CHECKS.items()]
