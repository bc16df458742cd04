"""Multi-step prediction error against the hidden world, and closed-loop planning runs."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from ..core import PointCloud
from ..errors import NumericError
from ..metrics import CDS_SCALE, chamfer_batch, cliffs_delta, shape_term
from ..planner import DynamicsModel, EpisodeRecord, Goal, mpc_loop, rollout_batch
from ..worlds import World, sample_goal_pose

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HorizonScore:
    horizon: int
    guided: bool
    mean: float
    std: float
    n: int


def episode_arrays(episodes):
    x0 = np.stack([init.positions for init, _, _ in episodes])
    starts = np.array([[a.start for a in acts] for _, acts, _ in episodes], dtype=np.float64)
    ends = np.array([[a.end for a in acts] for _, acts, _ in episodes], dtype=np.float64)
    truth = np.stack([[s.positions for s in states] for _, _, states in episodes])
    return x0, starts, ends, truth


def eval_dynamics(model: DynamicsModel, episodes, horizons, guided: bool) -> list[HorizonScore]:
    """CD+S of autoregressive rollouts at each horizon, mean and std over episodes."""
    if not episodes:
        return []
    x0, starts, ends, truth = episode_arrays(episodes)
    h_max = max(horizons)
    if starts.shape[1] < h_max:
        raise ValueError(f"episodes hold {starts.shape[1]} actions, need {h_max}")
    masses = episodes[0][0].masses
    starts, ends = starts[:, :h_max], ends[:, :h_max]
    try:
        pred = rollout_batch(x0, masses, starts, ends, model, guided, keep_all=True)
    except (NumericError, FloatingPointError):
        # one runaway episode should not sink the rest; it scores inf instead
        pred = np.stack([_safe_rollout(x0[k], masses, starts[k], ends[k], model, guided)
                         for k in range(len(x0))])
    out = []
    with np.errstate(over="ignore", invalid="ignore"):
        for h in horizons:
            p, t = pred[:, h - 1], truth[:, h - 1]
            scores = CDS_SCALE * (chamfer_batch(p, t) + shape_term(p, t, model.edges))
            scores = np.where(np.isfinite(scores), scores, np.inf)
            std = float(scores.std()) if np.all(np.isfinite(scores)) else float("inf")
            out.append(HorizonScore(h, guided, float(scores.mean()), std, len(scores)))
    return out


def _safe_rollout(x0, masses, starts, ends, model, guided):
    h = len(starts)
    out = np.full((h,) + x0.shape, np.inf)
    x = x0[None]
    for t in range(h):
        try:
            x = rollout_batch(x, masses, starts[None, t:t + 1], ends[None, t:t + 1], model, guided)
        except (NumericError, FloatingPointError):
            break
        out[t] = x[0]
    return out


def eval_planning(spec, model: DynamicsModel, planning, seed: int, guided: bool,
                  world: World | None = None) -> list[tuple[int, int, EpisodeRecord]]:
    """Run the goal x repeat grid; returns (goal index, repeat, record) triples."""
    world = world or World.create(spec)
    runs = []
    for g in range(planning.n_goals):
        start, goal_pts = sample_goal_pose(spec, [seed, g])
        goal = Goal(PointCloud(goal_pts), planning.success_threshold, goal_pts)
        for r in range(planning.repeats):
            world.reset(start)
            rec = mpc_loop(world, model.graph, goal, model, planning.cem, planning.max_steps,
                           [seed, g, r], guided)
            log.info("goal=%d repeat=%d guided=%s success=%s steps=%d", g, r, guided, rec.success, rec.steps)
            runs.append((g, r, rec))
    return runs


def planning_summary(guided_runs, unguided_runs=None) -> dict:
    recs = [r for _, _, r in guided_runs]
    solved = [r.steps for r in recs if r.success]
    out = {"episodes": len(recs), "successes": len(solved),
           "success_rate": len(solved) / len(recs) if recs else float("nan"),
           "mean_steps_to_solve": float(np.mean(solved)) if solved else float("nan"),
           "mean_final_distance": float(np.mean([r.final_distance for r in recs])) if recs else float("nan")}
    if unguided_runs:
        out["cliffs_delta"] = cliffs_delta([r.final_distance for r in recs],
                                           [r.final_distance for _, _, r in unguided_runs])
    return out


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
