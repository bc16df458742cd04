"""End-to-end pipelines: data generation, the horizon sweep and planning comparisons."""
from __future__ import annotations

import dataclasses
import json
import logging
import platform
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..egnn import EgnnParams, save_checkpoint
from ..planner import DynamicsModel
from ..worlds import World, generate_dataset, generate_episodes
from .config import ExperimentConfig
from .evaluation import eval_dynamics, eval_planning, planning_summary, write_csv
from .training import train

log = logging.getLogger(__name__)

DYNAMICS_HEADER = ["object", "n_train", "horizon", "guided", "cds_mean", "cds_std", "episodes"]
PLANNING_HEADER = ["object", "guided", "goal", "repeat", "success", "steps",
                   "initial_chamfer", "final_chamfer", "initial_distance", "final_distance"]
SUMMARY_HEADER = ["object", "guided", "episodes", "successes", "success_rate",
                  "mean_steps_to_solve", "mean_final_distance", "cliffs_delta"]

# distinct seed streams derived from the experiment seed
TRAIN_DATA_OFFSET = 1000
EVAL_DATA_OFFSET = 2000


def build_model(params: EgnnParams, world: World, cfg: ExperimentConfig, planning: bool = False):
    g = cfg.guidance
    return DynamicsModel(params, world.model_graph, world.model_cfg, g.gains, g.convergence(planning))


def train_on(cfg: ExperimentConfig, world: World, n_train: int, pool=None):
    """Fit a model on the first ``n_train`` sequences of the training stream."""
    spec = cfg.world_spec()
    seqs = pool[:n_train] if pool is not None and len(pool) >= n_train else \
        generate_dataset(spec, n_train, cfg.seed + TRAIN_DATA_OFFSET, world=world)
    tcfg = dataclasses.replace(cfg.train, seed=cfg.seed)
    return train(seqs, world.model_graph, tcfg)


def dynamics_table(cfg: ExperimentConfig, sizes=None, out_dir=None):
    """Guided and unguided CD+S per training-set size and horizon.

    Returns rows matching ``DYNAMICS_HEADER`` plus the trained parameters by size.
    """
    spec = cfg.world_spec()
    world = World.create(spec)
    sizes = tuple(cfg.dataset_sizes if sizes is None else sizes)
    pool = generate_dataset(spec, max(sizes), cfg.seed + TRAIN_DATA_OFFSET, world=world)
    episodes = generate_episodes(spec, cfg.n_eval_episodes, max(cfg.horizons),
                                 cfg.seed + EVAL_DATA_OFFSET, world=world)
    rows, models = [], {}
    for n in sizes:
        params, curve = train_on(cfg, world, n, pool)
        models[n] = params
        if out_dir is not None:
            save_checkpoint(Path(out_dir) / f"model_{spec.object_kind}_{n}.json", params,
                            {"n_train": n, "final_loss": curve[-1][1] if curve else None})
        for guided in (True, False):
            for s in eval_dynamics(build_model(params, world, cfg), episodes, cfg.horizons, guided):
                rows.append([spec.object_kind, n, s.horizon, guided, s.mean, s.std, s.n])
    return rows, models


def planning_comparison(cfg: ExperimentConfig, params: EgnnParams):
    """Guided and unguided MPC on the same goals; returns (per-episode rows, summary rows, summaries)."""
    spec = cfg.world_spec()
    world = World.create(spec)
    model = build_model(params, world, cfg, planning=True)
    runs = {g: eval_planning(spec, model, cfg.planning, cfg.seed, g, world) for g in (True, False)}
    rows, summary_rows, summaries = [], [], {}
    for guided in (True, False):
        for g, r, rec in runs[guided]:
            rows.append([spec.object_kind, guided, g, r, rec.success, rec.steps, rec.initial_chamfer,
                         rec.final_chamfer, rec.initial_distance, rec.final_distance])
        s = planning_summary(runs[guided], runs[not guided])
        summaries[guided] = s
        summary_rows.append([spec.object_kind, guided, s["episodes"], s["successes"], s["success_rate"],
                             s["mean_steps_to_solve"], s["mean_final_distance"], s["cliffs_delta"]])
    return rows, summary_rows, summaries, runs


def manifest(cfg: ExperimentConfig, command: str, extra=None) -> dict:
    return {"command": command, "config_digest": cfg.digest(), "seed": cfg.seed,
            "config": cfg.to_dict(), "package_version": __version__,
            "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            **(extra or {})}


def write_manifest(out_dir, cfg: ExperimentConfig, command: str, extra=None) -> None:
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    with open(Path(out_dir) / "manifest.json", "w") as fh:
        json.dump(manifest(cfg, command, extra), fh, indent=2, sort_keys=True)


def reproduce(cfg: ExperimentConfig, out_dir) -> dict:
    """Horizon sweep plus planning comparison; writes deterministic CSVs under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sizes = sorted(set(cfg.dataset_sizes) | {cfg.planning.train_size})
    rows, models = dynamics_table(cfg, sizes, out)
    write_csv(out / "dynamics.csv", DYNAMICS_HEADER, rows)
    plan_rows, summary_rows, summaries, runs = planning_comparison(cfg, models[cfg.planning.train_size])
    write_csv(out / "planning_episodes.csv", PLANNING_HEADER, plan_rows)
    write_csv(out / "planning_summary.csv", SUMMARY_HEADER, summary_rows)
    # wall-clock timings vary run to run, so they stay out of the CSVs
    with open(out / "planning_timing.json", "w") as fh:
        json.dump({str(g): [rec.wall_ms for _, _, rec in runs[g]] for g in runs}, fh)
    write_manifest(out, cfg, "reproduce")
    return {"dynamics": rows, "planning": summaries}
