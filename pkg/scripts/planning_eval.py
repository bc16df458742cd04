"""Guided vs unguided MPC on seeded goals for models trained on several data sizes.

    python scripts/planning_eval.py --sizes 20 100 --out-dir runs/planning [--config configs/acceptance.json]
"""
import argparse
import logging
import time
from pathlib import Path

from guided_dynamics.harness.config import ExperimentConfig
from guided_dynamics.harness.evaluation import write_csv
from guided_dynamics.harness.experiments import (PLANNING_HEADER, SUMMARY_HEADER, TRAIN_DATA_OFFSET,
                                                 planning_comparison, train_on, write_manifest)
from guided_dynamics.worlds import World, generate_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--object", default=None)
    ap.add_argument("--sizes", type=int, nargs="+", default=[20, 100])
    ap.add_argument("--out-dir", type=Path, default=Path("runs/planning"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.object:
        cfg = cfg.with_overrides(object_kind=args.object.replace("-", "_"))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    world = World.create(cfg.world_spec())
    pool = generate_dataset(cfg.world_spec(), max(args.sizes), cfg.seed + TRAIN_DATA_OFFSET, world=world)
    episodes, summary = [], []
    for n in args.sizes:
        t0 = time.perf_counter()
        params, _ = train_on(cfg, world, n, pool)
        rows, srows, summaries, _ = planning_comparison(cfg, params)
        episodes += [[n] + r for r in rows]
        summary += [[n] + r for r in srows]
        print(n, summaries, f"{time.perf_counter() - t0:.0f}s", flush=True)
    write_csv(args.out_dir / "planning_episodes.csv", ["n_train"] + PLANNING_HEADER, episodes)
    write_csv(args.out_dir / "planning_summary.csv", ["n_train"] + SUMMARY_HEADER, summary)
    write_manifest(args.out_dir, cfg, "planning_eval", {"sizes": args.sizes})


if __name__ == "__main__":
    main()
