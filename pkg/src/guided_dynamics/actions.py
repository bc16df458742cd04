"""Push-frame action features and contact-respecting push sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PushAction
from .errors import InvalidActionError, InvalidInputError


@dataclass(frozen=True)
class CanonicalAction:
    per_particle: np.ndarray  # (N, 3)
    magnitude: float

    def features(self) -> np.ndarray:
        """Node features (N, 4): canonical offset plus the push length."""
        return np.concatenate(
            [self.per_particle, np.full((len(self.per_particle), 1), self.magnitude)], axis=1)


def push_angle(action: PushAction) -> float:
    return float(np.arctan2(action.end[1] - action.start[1], action.end[0] - action.start[0]))


def canonical_arrays(positions, starts, ends, ground_height=0.0, full_turn=True):
    """Batched canonical features.

    positions (..., N, 3); starts/ends (..., 2). Returns features (..., N, 4).
    ``full_turn`` adds the extra 2*pi to the rotation angle, which changes nothing
    numerically beyond rounding.
    """
    x = np.asarray(positions, dtype=np.float64)
    s = np.asarray(starts, dtype=np.float64)
    e = np.asarray(ends, dtype=np.float64)
    d = e - s
    mag = np.hypot(d[..., 0], d[..., 1])
    if np.any(mag == 0):
        raise InvalidActionError("push start and end coincide")
    theta = np.arctan2(d[..., 1], d[..., 0])
    if full_turn:
        theta = theta + 2 * np.pi
    c, sn = np.cos(theta)[..., None], np.sin(theta)[..., None]
    rel = x[..., :2] - e[..., None, :]
    # rotate by -theta
    u = c * rel[..., 0] + sn * rel[..., 1]
    w = -sn * rel[..., 0] + c * rel[..., 1]
    z = x[..., 2] - ground_height
    m = np.broadcast_to(mag[..., None], u.shape)
    return np.stack([u, w, z, m], axis=-1)


def canonicalize(positions, action: PushAction, ground_height: float = 0.0,
                 full_turn: bool = True) -> CanonicalAction:
    if action.start == action.end:
        raise InvalidActionError("push start and end coincide")
    f = canonical_arrays(positions, action.start, action.end, ground_height, full_turn)
    return CanonicalAction(f[:, :3].copy(), float(action.length))


def segment_point_distance(starts, ends, points) -> np.ndarray:
    """Distance from each point to segment s->e; starts/ends (..., 2), points (..., N, 2)."""
    s = np.asarray(starts, dtype=np.float64)[..., None, :]
    e = np.asarray(ends, dtype=np.float64)[..., None, :]
    p = np.asarray(points, dtype=np.float64)[..., :2]
    d = e - s
    dd = np.sum(d * d, axis=-1)
    t = np.clip(np.sum((p - s) * d, axis=-1) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
    proj = s + t[..., None] * d
    return np.linalg.norm(p - proj, axis=-1)


def sample_push_action(object_positions, push_length_range=(0.15, 0.5), contact_margin=0.1,
                       rng=None, duration: float = 1.0, band: float | None = None) -> PushAction:
    """Random push that starts ``contact_margin`` behind the object's rear surface.

    A direction and a lateral offset are drawn; the rear-most particle within a
    lateral band around that offset becomes the contact particle. With zero
    margin the push starts on a particle, which is how a picker grasps.
    """
    x = np.asarray(object_positions, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise InvalidInputError("need at least one object particle")
    lo, hi = push_length_range
    if not (0 < lo <= hi):
        raise InvalidInputError("push_length_range must satisfy 0 < lo <= hi")
    if len(x) == 1 and contact_margin <= 0:
        raise InvalidInputError("single-point object with zero margin gives a degenerate push")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    phi = rng.uniform(-np.pi, np.pi)
    u = np.array([np.cos(phi), np.sin(phi)])
    perp = np.array([-u[1], u[0]])
    along = x[:, :2] @ u
    lateral = x[:, :2] @ perp
    if contact_margin <= 0:
        p = x[int(rng.integers(len(x))), :2]
    else:
        offset = rng.uniform(lateral.min(), lateral.max())
        width = band if band is not None else max(contact_margin, 1e-9)
        near = np.abs(lateral - offset)
        cand = np.flatnonzero(near <= width)
        if len(cand) == 0:
            cand = np.array([int(np.argmin(near))])
        p = x[cand[np.argmin(along[cand])], :2]
    length = rng.uniform(lo, hi)
    s = p - contact_margin * u
    e = s + length * u
    return PushAction(tuple(s), tuple(e), duration)


def action_is_valid(action_start, action_end, positions, contact_radius: float) -> np.ndarray:
    """Batched contact check: start clear of every particle, path touching one.

    starts/ends (B, 2); positions (N, 3) or (B, N, 3).
    """
    x = np.asarray(positions, dtype=np.float64)
    s = np.asarray(action_start, dtype=np.float64)
    e = np.asarray(action_end, dtype=np.float64)
    xs = x[..., :2]
    if xs.ndim == 2:
        xs = np.broadcast_to(xs, s.shape[:-1] + xs.shape)
    start_d = np.linalg.norm(xs - s[..., None, :], axis=-1).min(axis=-1)
    path_d = segment_point_distance(s, e, xs).min(axis=-1)
    moved = np.linalg.norm(e - s, axis=-1) > 0
    return (start_d >= contact_radius) & (path_d < contact_radius) & moved
