"""Guided vs unguided CD+S per horizon for each object at its reference training-set size.

    python scripts/horizon_sweep.py --out-dir runs/sweep [--config configs/fast.json]
"""
import argparse
import logging
import time
from pathlib import Path

from guided_dynamics.harness.config import ExperimentConfig
from guided_dynamics.harness.evaluation import write_csv
from guided_dynamics.harness.experiments import DYNAMICS_HEADER, dynamics_table, write_manifest

SIZES = {"tblock": 10, "stiff_rope": 20, "bendy_rope": 40, "cloth": 20}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--out-dir", type=Path, default=Path("runs/sweep"))
    ap.add_argument("--objects", nargs="+", default=list(SIZES))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for kind in args.objects:
        t0 = time.perf_counter()
        cfg = base.with_overrides(object_kind=kind)
        r, _ = dynamics_table(cfg, sizes=(SIZES[kind],))
        rows += r
        for row in r:
            print(*row, sep="\t")
        print(f"{kind}: {time.perf_counter() - t0:.0f}s", flush=True)
    write_csv(args.out_dir / "horizon_sweep.csv", DYNAMICS_HEADER, rows)
    write_manifest(args.out_dir, base, "horizon_sweep")


if __name__ == "__main__":
    main()
