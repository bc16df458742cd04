"""Evaluation metrics: particle distance, chamfer, CD+S and Cliff's delta."""
from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

CDS_SCALE = 100.0


def _pts(a):
    return np.asarray(getattr(a, "positions", getattr(a, "points", a)), dtype=np.float64)


def particle_distance(a, b) -> float:
    """Mean paired Euclidean distance."""
    x, y = _pts(a), _pts(b)
    if x.shape != y.shape:
        raise InvalidInputError(f"length mismatch: {x.shape} vs {y.shape}")
    return float(np.linalg.norm(x - y, axis=-1).mean())


def chamfer_batch(a, b) -> np.ndarray:
    """Symmetric unsquared chamfer for a (..., N, 3) against b (..., M, 3)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-2] == 0 or b.shape[-2] == 0:
        raise InvalidInputError("chamfer distance of an empty cloud")
    diff = a[..., :, None, :] - b[..., None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    return d.min(axis=-1).mean(axis=-1) + d.min(axis=-2).mean(axis=-1)


def chamfer_distance(a, b) -> float:
    return float(chamfer_batch(_pts(a), _pts(b)))


def shape_term(pred, target, neighborhoods) -> np.ndarray:
    p, t = _pts(pred), _pts(target)
    nb = np.asarray(neighborhoods, dtype=np.int64).reshape(-1, 2)
    if len(nb) == 0:
        return np.zeros(p.shape[:-2])
    rel = (p[..., nb[:, 0], :] - p[..., nb[:, 1], :]) - (t[..., nb[:, 0], :] - t[..., nb[:, 1], :])
    return np.mean(np.sum(rel * rel, axis=-1), axis=-1)


def cd_plus_s(pred, target, neighborhoods) -> float:
    """(chamfer + shape-consistency term) x 100."""
    p, t = _pts(pred), _pts(target)
    if p.shape != t.shape:
        raise InvalidInputError(f"shape mismatch: {p.shape} vs {t.shape}")
    return float(CDS_SCALE * (chamfer_batch(p, t) + shape_term(p, t, neighborhoods)))


def cliffs_delta(xs, ys) -> float:
    """P(x < y) - P(x > y) over all pairs; positive when xs tend to be smaller."""
    x = np.asarray(xs, dtype=np.float64).reshape(-1)
    y = np.asarray(ys, dtype=np.float64).reshape(-1)
    if len(x) == 0 or len(y) == 0:
        raise InvalidInputError("Cliff's delta needs two non-empty samples")
    less = np.sum(x[:, None] < y[None, :])
    greater = np.sum(x[:, None] > y[None, :])
    return float((less - greater) / (len(x) * len(y)))
