"""CD+S against training-set size for one or more objects.

    python scripts/data_efficiency.py --objects tblock cloth --out-dir runs/data_eff
"""
import argparse
import logging
from pathlib import Path

from guided_dynamics.harness.config import ExperimentConfig
from guided_dynamics.harness.evaluation import write_csv
from guided_dynamics.harness.experiments import DYNAMICS_HEADER, dynamics_table, write_manifest
from guided_dynamics.worlds import KINDS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--objects", nargs="+", default=list(KINDS))
    ap.add_argument("--sizes", type=int, nargs="+", help="defaults to the config's dataset_sizes")
    ap.add_argument("--out-dir", type=Path, default=Path("runs/data_eff"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for kind in args.objects:
        r, _ = dynamics_table(base.with_overrides(object_kind=kind.replace("-", "_")), args.sizes,
                              args.out_dir)
        rows += r
    write_csv(args.out_dir / "data_efficiency.csv", DYNAMICS_HEADER, rows)
    write_manifest(args.out_dir, base, "data_efficiency")


if __name__ == "__main__":
    main()
