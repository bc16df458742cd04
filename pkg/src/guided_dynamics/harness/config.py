"""Experiment configuration: nested frozen dataclasses with a JSON round-trip."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from ..errors import InvalidInputError
from ..guidance import ConvergenceSpec, PidGains
from ..planner import CemConfig
from ..worlds import WorldSpec
from .training import TrainConfig


@dataclass(frozen=True)
class GuidanceConfig:
    kp: float = 50.0
    ki: float = 1.0
    kd: float = 10.0
    tol: float = 1e-3
    max_iters: int = 2000
    planning_max_iters: int = 150  # cap inside CEM, where thousands of rollouts run

    @property
    def gains(self) -> PidGains:
        return PidGains(self.kp, self.ki, self.kd)

    def convergence(self, planning: bool = False) -> ConvergenceSpec:
        return ConvergenceSpec(self.tol, self.planning_max_iters if planning else self.max_iters)


@dataclass(frozen=True)
class PlanningConfig:
    cem: CemConfig = field(default_factory=lambda: CemConfig(n_samples=64, n_iters=4))
    max_steps: int = 30
    n_goals: int = 10
    repeats: int = 1
    success_threshold: float = 0.1
    train_size: int = 100  # sequences behind the planning model


@dataclass(frozen=True)
class ExperimentConfig:
    object_kind: str = "tblock"
    seed: int = 0
    world: dict = field(default_factory=dict)  # WorldSpec overrides
    dataset_sizes: tuple = (10, 20, 40, 100)
    train: TrainConfig = field(default_factory=TrainConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    planning: PlanningConfig = field(default_factory=PlanningConfig)
    horizons: tuple = (1, 2, 4)
    n_eval_episodes: int = 20

    def __post_init__(self):
        object.__setattr__(self, "dataset_sizes", tuple(int(n) for n in self.dataset_sizes))
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        if not self.dataset_sizes or any(n < 1 for n in self.dataset_sizes):
            raise InvalidInputError("dataset sizes must be >= 1")
        if not self.horizons or self.horizons[0] < 1 or list(self.horizons) != sorted(set(self.horizons)):
            raise InvalidInputError("horizons must be >= 1, unique and ascending")
        if self.n_eval_episodes < 1 or self.planning.n_goals < 1 or self.planning.repeats < 1:
            raise InvalidInputError("episode, goal and repeat counts must be >= 1")
        self.world_spec()  # validates kind and overrides early

    def world_spec(self, seed: int | None = None) -> WorldSpec:
        kw = dict(self.world)
        kw.setdefault("seed", self.seed if seed is None else seed)
        try:
            return WorldSpec(self.object_kind, **kw)
        except TypeError as exc:
            raise InvalidInputError(f"bad world override: {exc}") from exc

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "train" in d:
                d["train"] = TrainConfig(**d["train"])
            if "guidance" in d:
                d["guidance"] = GuidanceConfig(**d["guidance"])
            if "planning" in d:
                p = dict(d["planning"])
                if "cem" in p:
                    p["cem"] = CemConfig(**p["cem"])
                d["planning"] = PlanningConfig(**p)
            return cls(**d)
        except TypeError as exc:
            raise InvalidInputError(f"bad config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
