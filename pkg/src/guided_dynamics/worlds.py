"""Ground-truth environments: the spring-mass engine with hidden parameters,
driven by a kinematic pusher (or picker) and observed as point clouds.

Each world also carries the learner's nominal model (graph + guidance config)
so recorded interactions can be tracked into training targets.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .actions import sample_push_action
from .core import (ParticleState, PointCloud, PushAction, SpringGraph, build_graph,
                   downsample_cloud)
from .errors import InvalidInputError
from .guidance import ConvergenceSpec, PidGains, track_cloud
from .physics import SimConfig, force_arrays, step_arrays

KINDS = ("tblock", "stiff_rope", "bendy_rope", "cloth")
NOMINAL_DT = 0.01


@dataclass(frozen=True)
class KindDefaults:
    spacing: float
    connect_factor: float  # spring threshold in units of spacing
    world_stiffness: float  # baseline of the hidden world, per unit mass
    model_stiffness: float  # learner's nominal spring stiffness, stable at NOMINAL_DT
    damping: float  # per NOMINAL_DT step
    agent_mode: str


DEFAULTS = {
    "tblock": KindDefaults(0.1, 1.5, 2.0e4, 1000.0, 0.98, "pusher"),
    "stiff_rope": KindDefaults(0.05, 2.05, 5.0e3, 800.0, 0.98, "pusher"),
    "bendy_rope": KindDefaults(0.05, 2.05, 3.0e2, 60.0, 0.98, "pusher"),
    "cloth": KindDefaults(0.1, 1.5, 2.0e3, 300.0, 0.98, "picker"),
}


@dataclass(frozen=True)
class WorldSpec:
    object_kind: str = "tblock"
    particle_count: int = 50
    agent_mode: str | None = None  # None -> kind default
    seed: int = 0
    friction: float = 0.3
    stiffness_range: tuple = (0.5, 2.0)
    damping_jitter: float = 0.05
    friction_jitter: float = 0.1
    world_dt: float = 1e-3
    settle_time: float = 0.5
    action_duration: float = 1.0
    pusher_radius: float = 0.08
    pusher_stiffness: float = 2.0e4
    grasp_radius: float = 0.06
    push_length_range: tuple = (0.15, 0.5)
    contact_margin: float = 0.1
    frames_per_action: int = 20

    def __post_init__(self):
        kind = self.object_kind.replace("-", "_")
        if kind not in KINDS:
            raise InvalidInputError(f"unknown object kind {self.object_kind!r}")
        object.__setattr__(self, "object_kind", kind)
        if self.particle_count < 2:
            raise InvalidInputError("particle_count must be >= 2")
        mode = self.agent_mode or DEFAULTS[kind].agent_mode
        if mode not in ("pusher", "picker"):
            raise InvalidInputError(f"unknown agent mode {mode!r}")
        object.__setattr__(self, "agent_mode", mode)
        object.__setattr__(self, "stiffness_range", tuple(self.stiffness_range))
        object.__setattr__(self, "push_length_range", tuple(self.push_length_range))

    @property
    def defaults(self) -> KindDefaults:
        return DEFAULTS[self.object_kind]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class InteractionSequence:
    initial_state: ParticleState
    action: PushAction
    frames: list
    final_tracked_state: ParticleState
    final_true_state: ParticleState | None = None
    tracking_converged: bool = True

    def __post_init__(self):
        if not self.frames:
            raise InvalidInputError("an interaction needs at least one frame")
        if self.final_tracked_state.n != self.initial_state.n:
            raise InvalidInputError("tracked state length differs from the initial state")

    def to_dict(self) -> dict:
        return {"initial_state": self.initial_state.to_dict(),
                "action": self.action.to_dict(),
                "frames": [f.points.tolist() for f in self.frames],
                "final_tracked_state": self.final_tracked_state.to_dict(),
                "final_true_state": None if self.final_true_state is None else self.final_true_state.to_dict(),
                "tracking_converged": self.tracking_converged}

    @classmethod
    def from_dict(cls, d) -> "InteractionSequence":
        true = d.get("final_true_state")
        return cls(ParticleState.from_dict(d["initial_state"]), PushAction.from_dict(d["action"]),
                   [PointCloud(f) for f in d["frames"]], ParticleState.from_dict(d["final_tracked_state"]),
                   None if true is None else ParticleState.from_dict(true), d.get("tracking_converged", True))


def _lattice(cells, spacing):
    pts = np.array([[cx * spacing, cy * spacing, 0.0] for cx, cy in cells])
    return pts - np.r_[pts[:, :2].mean(axis=0), 0.0]


def _tblock_cells(bar_w=10, bar_h=2, stem_w=3, stem_h=10):
    cells = [(c - (bar_w - 1) / 2, -r) for r in range(bar_h) for c in range(bar_w)]
    cells += [(c - (stem_w - 1) / 2, -(bar_h + r)) for r in range(stem_h) for c in range(stem_w)]
    return cells


def rest_shape(kind: str, count: int, seed: int = 0):
    """Rest positions centred on the planar centroid, and the nominal spacing."""
    d = DEFAULTS[kind]
    s = d.spacing
    if kind == "tblock":
        if count == 50:
            return _lattice(_tblock_cells(), s), s
        scale = np.sqrt(50.0 / count)
        dense = _lattice(_tblock_cells(20, 4, 6, 20), s / 2)
        pts = downsample_cloud(PointCloud(dense), count, seed).points
        return pts - np.r_[pts[:, :2].mean(axis=0), 0.0], s * scale
    if kind in ("stiff_rope", "bendy_rope"):
        return _lattice([(c, 0.0) for c in range(count)], s), s
    rows = 5 if count == 50 else max(2, int(round(np.sqrt(count / 2))))
    cols = int(np.ceil(count / rows))
    pts = _lattice([(c, r) for r in range(rows) for c in range(cols)], s)
    if len(pts) > count:
        pts = downsample_cloud(PointCloud(pts), count, seed).points
        pts = pts - np.r_[pts[:, :2].mean(axis=0), 0.0]
    return pts, s


def place(shape, angle: float, offset) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    return shape @ rot.T + np.r_[offset[0], offset[1], 0.0]


def nominal_model(spec: WorldSpec, positions):
    """Learner-side spring graph and guidance config built from observed rest positions."""
    d = spec.defaults
    _, spacing = rest_shape(spec.object_kind, spec.particle_count, spec.seed)
    graph = build_graph(positions, d.connect_factor * spacing * 1.001, d.model_stiffness, d.damping)
    # frictionless: guidance only projects onto feasible shapes
    cfg = SimConfig(dt=NOMINAL_DT, friction=0.0)
    return graph, cfg


def make_world(spec: WorldSpec):
    """Hidden ground truth: (rest state at the origin, world springs, world sim config)."""
    d = spec.defaults
    shape, spacing = rest_shape(spec.object_kind, spec.particle_count, spec.seed)
    rng = np.random.default_rng([spec.seed, 7919])
    lo, hi = spec.stiffness_range
    k_scale = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    damping = float(np.clip(d.damping + rng.uniform(-spec.damping_jitter, spec.damping_jitter), 0.5, 1.0))
    friction = float(max(0.0, spec.friction + rng.uniform(-spec.friction_jitter, spec.friction_jitter)))
    # damping is specified per NOMINAL_DT; keep the same decay rate per second
    step_damping = damping ** (spec.world_dt / NOMINAL_DT)
    graph = build_graph(shape, d.connect_factor * spacing * 1.001, d.world_stiffness * k_scale, step_damping)
    cfg = SimConfig(dt=spec.world_dt, friction=friction)
    return ParticleState.at_rest(shape), graph, cfg


@dataclass
class World:
    spec: WorldSpec
    state: ParticleState
    graph: SpringGraph
    cfg: SimConfig
    model_graph: SpringGraph
    model_cfg: SimConfig
    gains: PidGains = field(default_factory=lambda: PidGains(kp=50.0, ki=20.0, kd=10.0))
    convergence: ConvergenceSpec = field(default_factory=lambda: ConvergenceSpec(tol=1e-3, max_iters=600))

    @classmethod
    def create(cls, spec: WorldSpec, angle: float = 0.0, offset=(0.0, 0.0), **kw) -> "World":
        rest, graph, cfg = make_world(spec)
        state = ParticleState.at_rest(place(rest.positions, angle, offset))
        mgraph, mcfg = nominal_model(spec, rest.positions)
        return cls(spec, state, graph, cfg, mgraph, mcfg, **kw)

    def reset(self, positions) -> None:
        self.state = ParticleState.at_rest(positions, mass=float(self.state.masses[0]))

    def observe(self) -> PointCloud:
        return PointCloud(self.state.positions.copy())

    def _pusher_force(self, x, p):
        rel = x[:, :2] - p
        d = np.linalg.norm(rel, axis=1)
        pen = self.spec.pusher_radius - d
        hit = (pen > 0) & (d > 1e-12)
        f = np.zeros_like(x)
        if np.any(hit):
            f[hit, :2] = (self.spec.pusher_stiffness * pen[hit] / d[hit])[:, None] * rel[hit]
        return f

    def simulate_action(self, action: PushAction):
        """Advance the hidden world through one action; returns (frames, settled state)."""
        spec = self.spec
        dt = self.cfg.dt
        n_push = max(1, int(round(action.duration / dt)))
        n_settle = int(round(spec.settle_time / dt))
        frame_every = max(1, n_push // spec.frames_per_action)
        s = np.array(action.start)
        e = np.array(action.end)
        vel = (e - s) / (n_push * dt)
        x = np.array(self.state.positions)
        v = np.array(self.state.velocities)
        m = self.state.masses
        grasp = None
        if spec.agent_mode == "picker":
            d = np.linalg.norm(x[:, :2] - s, axis=1)
            if d.min() <= spec.grasp_radius:
                grasp = int(np.argmin(d))
                grasp_off = x[grasp, :2] - s
        frames = []
        for t in range(n_push + n_settle):
            pushing = t < n_push
            p = s + (e - s) * min(1.0, (t + 1) / n_push)
            ext = self._pusher_force(x, p) * m[:, None] if (pushing and spec.agent_mode == "pusher") else None
            f, support = force_arrays(x, m, self.graph, ext, self.cfg)
            x, v = step_arrays(x, v, m, f, support, self.graph.damping, self.cfg)
            if pushing and grasp is not None:
                x[grasp, :2] = p + grasp_off
                v[grasp, :2] = vel
            # keep observing at the same cadence while the object coasts to rest
            if (t + 1) % frame_every == 0 and t + 1 < n_push + n_settle:
                frames.append(PointCloud(x.copy()))
        settled = ParticleState(x, np.zeros_like(v), m)
        frames.append(PointCloud(x.copy()))
        self.state = settled
        return frames, settled

    def track(self, start: ParticleState, frames):
        """Follow observed frames with the nominal model; returns (state, all_converged)."""
        state = ParticleState.at_rest(start.positions, mass=float(start.masses[0]))
        ok = True
        for fr in frames:
            state, conv, _ = track_cloud(state, self.model_graph, fr, self.gains, self.convergence, self.model_cfg)
            ok &= conv
        return ParticleState(state.positions, np.zeros_like(state.velocities), state.masses), ok

    def step(self, action: PushAction) -> InteractionSequence:
        initial = self.state
        frames, settled = self.simulate_action(action)
        tracked, ok = self.track(initial, frames)
        return InteractionSequence(initial, action, frames, tracked, settled, ok)


def world_step(world: World, action: PushAction) -> InteractionSequence:
    return world.step(action)


def sample_action(world: World, rng) -> PushAction:
    spec = world.spec
    margin = 0.0 if spec.agent_mode == "picker" else spec.contact_margin
    return sample_push_action(world.state.positions, spec.push_length_range, margin, rng,
                              duration=spec.action_duration)


def random_pose(rng, extent: float = 0.5):
    return float(rng.uniform(-np.pi, np.pi)), rng.uniform(-extent, extent, size=2)


def generate_dataset(spec: WorldSpec, n_interactions: int, seed: int, world: World | None = None):
    """``n`` single-action interactions from fresh random rest poses; deterministic per seed."""
    if n_interactions < 0:
        raise InvalidInputError("n_interactions must be >= 0")
    world = world or World.create(spec)
    rest, _, _ = make_world(spec)
    out = []
    for k in range(n_interactions):
        rng = np.random.default_rng([seed, k])
        angle, offset = random_pose(rng)
        world.reset(place(rest.positions, angle, offset))
        out.append(world.step(sample_action(world, rng)))
    return out


def generate_episodes(spec: WorldSpec, n_episodes: int, horizon: int, seed: int, world: World | None = None):
    """Multi-action evaluation episodes: list of (initial state, actions, true states after each)."""
    world = world or World.create(spec)
    rest, _, _ = make_world(spec)
    episodes = []
    for k in range(n_episodes):
        rng = np.random.default_rng([seed, 100003, k])
        angle, offset = random_pose(rng)
        world.reset(place(rest.positions, angle, offset))
        init = world.state
        actions, states = [], []
        for _ in range(horizon):
            a = sample_action(world, rng)
            world.simulate_action(a)
            actions.append(a)
            states.append(world.state)
        episodes.append((init, actions, states))
    return episodes


def sample_goal_pose(spec: WorldSpec, seed, shift_range=(0.5, 1.0), max_turn: float = np.pi / 3):
    """A start pose and a goal pose differing by a planar rigid motion.

    The default shift is half to one body length of the T-block, so no goal starts
    near a 0.1 chamfer threshold.

    Returns (start positions, goal positions); particle order matches so paired
    distances are meaningful.
    """
    rng = np.random.default_rng([*np.atleast_1d(seed), 7919])
    rest, _, _ = make_world(spec)
    angle, offset = random_pose(rng, extent=0.3)
    heading = rng.uniform(-np.pi, np.pi)
    shift = rng.uniform(*shift_range) * np.array([np.cos(heading), np.sin(heading)])
    turn = rng.uniform(-max_turn, max_turn)
    start = place(rest.positions, angle, offset)
    goal = place(rest.positions, angle + turn, offset + shift)
    return start, goal


def save_dataset(path, spec: WorldSpec, sequences, version: str) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"header": {"spec": spec.to_dict(), "version": version,
                                        "count": len(sequences)}}) + "\n")
        for seq in sequences:
            fh.write(json.dumps(seq.to_dict()) + "\n")


def load_dataset(path):
    with open(path) as fh:
        lines = [line for line in fh if line.strip()]
    header = json.loads(lines[0])["header"]
    spec = WorldSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in header["spec"].items()})
    return spec, [InteractionSequence.from_dict(json.loads(line)) for line in lines[1:]]
