"""Turn tracked interactions into (state, action features, target) pairs and fit the network."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..actions import canonical_arrays
from ..core import SpringGraph
from ..egnn import AdamState, EgnnParams, adam_update, backward, egnn_forward, init_params, loss
from ..errors import NumericError, TrainingError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    lr: float = 1e-3
    batch_size: int = 8
    seed: int = 0
    val_fraction: float = 0.1
    n_layers: int = 4
    hidden_dim: int = 64
    shape_weight: float = 1.0
    lr_decay: float = 1.0  # multiplicative per epoch
    mirror: bool = True


def mirror_across_push(points, starts, ends):
    """Reflect (B, N, 3) points across each vertical plane containing its push line."""
    u = ends - starts
    u = u / np.linalg.norm(u, axis=-1, keepdims=True)
    rel = points[..., :2] - starts[:, None, :]
    along = np.sum(rel * u[:, None, :], axis=-1, keepdims=True)
    out = np.array(points, dtype=np.float64)
    out[..., :2] = starts[:, None, :] + 2.0 * along * u[:, None, :] - rel
    return out


def make_pairs(sequences, ground_height: float = 0.0, mirror: bool = False):
    """Stack (positions, features, tracked targets) from interaction sequences.

    With ``mirror`` each pair is joined by its reflection across the push line,
    which is a symmetry of pushing on an isotropic floor.
    """
    x = np.stack([s.initial_state.positions for s in sequences])
    st = np.array([s.action.start for s in sequences], dtype=np.float64)
    en = np.array([s.action.end for s in sequences], dtype=np.float64)
    t = np.stack([s.final_tracked_state.positions for s in sequences])
    if mirror:
        x = np.concatenate([x, mirror_across_push(x, st, en)])
        t = np.concatenate([t, mirror_across_push(t, st, en)])
        st, en = np.concatenate([st, st]), np.concatenate([en, en])
    return x, canonical_arrays(x, st, en, ground_height), t


def split_indices(n: int, val_fraction: float, seed: int):
    rng = np.random.default_rng([seed, 17])
    perm = rng.permutation(n)
    n_val = int(round(val_fraction * n)) if n > 1 else 0
    n_val = min(max(n_val, 1 if val_fraction > 0 and n > 1 else 0), n - 1) if n > 1 else 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def new_params(graph: SpringGraph, cfg: TrainConfig) -> EgnnParams:
    n = graph.n_particles
    avg_degree = max(2.0 * graph.n_edges / n, 1.0)
    dist = float(np.mean(graph.rest_length)) if graph.n_edges else 1.0
    return init_params(cfg.n_layers, cfg.hidden_dim, in_dim=4, coord_scale=1.0 / avg_degree,
                       dist_scale=dist, seed=cfg.seed)


def dataset_loss(params, pairs, edges, shape_weight=1.0, idx=None):
    x, f, t = pairs
    if idx is not None:
        x, f, t = x[idx], f[idx], t[idx]
    if len(x) == 0:
        return float("nan")
    return loss(egnn_forward(x, f, edges, params), t, edges, shape_weight)[0]


def train(sequences, graph: SpringGraph, cfg: TrainConfig, params: EgnnParams | None = None,
          ground_height: float = 0.0):
    """Adam on the dynamics + shape loss; keeps the parameters with the best validation loss.

    Returns (params, curve) where curve rows are (epoch, train_loss, val_loss).
    """
    params = params if params is not None else new_params(graph, cfg)
    if cfg.epochs == 0 or not sequences:
        return params, []
    edges = graph.pairs
    tr, va = split_indices(len(sequences), cfg.val_fraction, cfg.seed)
    pairs = make_pairs(sequences, ground_height, cfg.mirror)
    if cfg.mirror:
        # a sequence and its reflection stay on the same side of the split
        tr = np.concatenate([tr, tr + len(sequences)])
        va = np.concatenate([va, va + len(sequences)])
    monitor = va if len(va) else tr
    rng = np.random.default_rng([cfg.seed, 23])
    opt = AdamState.create(params)
    best = params.copy()
    best_val = dataset_loss(params, pairs, edges, cfg.shape_weight, monitor)
    curve = []
    lr = cfg.lr
    for epoch in range(cfg.epochs):
        order = tr[rng.permutation(len(tr))]
        for b0 in range(0, len(order), cfg.batch_size):
            idx = order[b0:b0 + cfg.batch_size]
            batch = (pairs[0][idx], pairs[1][idx], pairs[2][idx])
            try:
                grads, _ = backward(batch, params, edges, cfg.shape_weight)
            except NumericError as exc:
                raise TrainingError(f"numeric failure in epoch {epoch}: {exc}", epoch) from exc
            params, opt = adam_update(params, grads, opt, lr)
        lr *= cfg.lr_decay
        train_loss = dataset_loss(params, pairs, edges, cfg.shape_weight, tr)
        val_loss = dataset_loss(params, pairs, edges, cfg.shape_weight, monitor)
        if not np.isfinite(train_loss):
            raise TrainingError(f"loss became non-finite in epoch {epoch}", epoch)
        curve.append((epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val, best = val_loss, params.copy()
        if epoch % 50 == 0:
            log.info("epoch=%d train=%.5f val=%.5f", epoch, train_loss, val_loss)
    return best, curve
