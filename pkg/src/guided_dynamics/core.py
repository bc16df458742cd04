"""Particle/graph value types, point-cloud downsampling and graph construction.

Vectors are plain ``(..., 3)`` float64 arrays with z as the gravity axis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidActionError


def as_points(a, name="points") -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidInputError(f"{name} must have shape (N, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ParticleState:
    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        x = as_points(self.positions, "positions")
        v = as_points(self.velocities, "velocities")
        m = np.array(self.masses, dtype=np.float64).reshape(-1)
        if len(x) < 1 or not (len(x) == len(v) == len(m)):
            raise InvalidInputError(
                f"positions/velocities/masses lengths differ: {len(x)}, {len(v)}, {len(m)}")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise InvalidInputError("masses must be finite and strictly positive")
        object.__setattr__(self, "positions", _frozen(x))
        object.__setattr__(self, "velocities", _frozen(v))
        object.__setattr__(self, "masses", _frozen(m))

    @classmethod
    def at_rest(cls, positions, mass=1.0) -> "ParticleState":
        x = as_points(positions)
        return cls(x, np.zeros_like(x), np.full(len(x), float(mass)))

    @property
    def n(self) -> int:
        return len(self.positions)

    def with_positions(self, positions, velocities=None) -> "ParticleState":
        v = np.zeros_like(positions) if velocities is None else velocities
        return ParticleState(positions, v, self.masses)

    def to_dict(self) -> dict:
        return {"positions": self.positions.tolist(),
                "velocities": self.velocities.tolist(),
                "masses": self.masses.tolist()}

    @classmethod
    def from_dict(cls, d) -> "ParticleState":
        return cls(d["positions"], d["velocities"], d["masses"])


@dataclass(frozen=True)
class SpringGraph:
    """Undirected springs, one row per pair with ``i < j``."""

    i: np.ndarray
    j: np.ndarray
    stiffness: np.ndarray
    rest_length: np.ndarray
    damping: float
    n_particles: int | None = None

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.int64).reshape(-1)
        j = np.asarray(self.j, dtype=np.int64).reshape(-1)
        k = np.asarray(self.stiffness, dtype=np.float64).reshape(-1)
        r = np.asarray(self.rest_length, dtype=np.float64).reshape(-1)
        if not (len(i) == len(j) == len(k) == len(r)):
            raise InvalidInputError("edge arrays must have equal length")
        if np.any(i == j):
            raise InvalidInputError("self-loop in spring graph")
        if np.any(k <= 0) or np.any(r < 0) or not np.all(np.isfinite(k)) or not np.all(np.isfinite(r)):
            raise InvalidInputError("stiffness must be > 0 and rest lengths >= 0")
        if not (0.0 < self.damping <= 1.0):
            raise InvalidInputError(f"damping must lie in (0, 1], got {self.damping}")
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        if len(lo):
            keys = lo * (int(hi.max()) + 1) + hi
            if len(np.unique(keys)) != len(keys):
                raise InvalidInputError("duplicate undirected edge")
        n = self.n_particles
        if n is None:
            n = int(hi.max()) + 1 if len(hi) else 0
        if len(hi) and (int(hi.max()) >= n or int(lo.min()) < 0):
            raise InvalidInputError("edge index out of range")
        object.__setattr__(self, "i", _frozen(lo))
        object.__setattr__(self, "j", _frozen(hi))
        object.__setattr__(self, "stiffness", _frozen(k))
        object.__setattr__(self, "rest_length", _frozen(r))
        object.__setattr__(self, "damping", float(self.damping))
        object.__setattr__(self, "n_particles", int(n))

    @property
    def n_edges(self) -> int:
        return len(self.i)

    @property
    def pairs(self) -> np.ndarray:
        return np.stack([self.i, self.j], axis=1)

    def with_params(self, stiffness=None, damping=None) -> "SpringGraph":
        k = self.stiffness if stiffness is None else np.broadcast_to(stiffness, self.i.shape)
        return SpringGraph(self.i, self.j, k, self.rest_length,
                           self.damping if damping is None else damping, self.n_particles)

    def strain(self, positions) -> np.ndarray:
        """Per-edge ``|d - r| / r`` for positions of shape (..., N, 3)."""
        x = np.asarray(positions)
        d = np.linalg.norm(x[..., self.i, :] - x[..., self.j, :], axis=-1)
        return np.abs(d - self.rest_length) / np.maximum(self.rest_length, 1e-12)

    def to_dict(self) -> dict:
        return {"edges": [[int(a), int(b), float(k), float(r)]
                          for a, b, k, r in zip(self.i, self.j, self.stiffness, self.rest_length)],
                "damping": self.damping,
                "n_particles": self.n_particles}

    @classmethod
    def from_dict(cls, d) -> "SpringGraph":
        e = np.asarray(d["edges"], dtype=np.float64).reshape(-1, 4)
        return cls(e[:, 0].astype(int), e[:, 1].astype(int), e[:, 2], e[:, 3],
                   d["damping"], d.get("n_particles"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "SpringGraph":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class PushAction:
    start: tuple
    end: tuple
    duration: float = 1.0

    def __post_init__(self):
        s = tuple(float(v) for v in self.start)
        e = tuple(float(v) for v in self.end)
        if len(s) != 2 or len(e) != 2:
            raise InvalidActionError("push start/end must be planar (x, y) pairs")
        if not all(np.isfinite(s + e)) or not np.isfinite(self.duration):
            raise InvalidActionError("push action contains non-finite values")
        if s == e:
            raise InvalidActionError("push start and end coincide")
        if self.duration <= 0:
            raise InvalidActionError("push duration must be positive")
        object.__setattr__(self, "start", s)
        object.__setattr__(self, "end", e)
        object.__setattr__(self, "duration", float(self.duration))

    @property
    def length(self) -> float:
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))

    def to_dict(self) -> dict:
        return {"s": list(self.start), "e": list(self.end), "dt": self.duration}

    @classmethod
    def from_dict(cls, d) -> "PushAction":
        return cls(d["s"], d["e"], d["dt"])


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray = field()

    def __post_init__(self):
        p = as_points(self.points, "cloud")
        if len(p) < 1:
            raise InvalidInputError("point cloud is empty")
        object.__setattr__(self, "points", _frozen(p))

    def __len__(self):
        return len(self.points)

    def to_json(self) -> str:
        return json.dumps(self.points.tolist())

    @classmethod
    def from_json(cls, s: str) -> "PointCloud":
        return cls(json.loads(s))


def downsample_cloud(cloud: PointCloud, k: int, seed: int) -> PointCloud:
    """Farthest-point sampling of ``min(k, M)`` points from a seeded random start."""
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    pts = np.asarray(cloud.points if isinstance(cloud, PointCloud) else cloud, dtype=np.float64)
    if pts.ndim != 2 or len(pts) == 0:
        raise InvalidInputError("cannot downsample an empty cloud")
    m = len(pts)
    if k >= m:
        return PointCloud(pts.copy())
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(m))]
    dist = np.linalg.norm(pts - pts[chosen[0]], axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1))
    return PointCloud(pts[chosen])


def build_graph(positions, threshold: float, stiffness: float, damping: float) -> SpringGraph:
    """Connect every pair closer than ``threshold``; rest lengths are the current distances."""
    if threshold <= 0 or stiffness <= 0 or not (0 < damping <= 1):
        raise InvalidInputError("need threshold > 0, stiffness > 0, damping in (0, 1]")
    x = np.asarray(positions, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3 or len(x) < 1:
        raise InvalidInputError("build_graph needs at least one particle")
    i, j = np.triu_indices(len(x), k=1)
    d = np.linalg.norm(x[i] - x[j], axis=1)
    keep = d <= threshold
    return SpringGraph(i[keep], j[keep], np.full(int(keep.sum()), float(stiffness)),
                       d[keep], damping, n_particles=len(x))
