"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from ..egnn import load_checkpoint, save_checkpoint
from ..errors import InvalidInputError
from ..worlds import KINDS, World, generate_dataset, generate_episodes, load_dataset, save_dataset
from . import selftest
from .config import ExperimentConfig
from .evaluation import eval_dynamics, write_csv
from .experiments import (DYNAMICS_HEADER, EVAL_DATA_OFFSET, PLANNING_HEADER, SUMMARY_HEADER,
                          TRAIN_DATA_OFFSET, build_model, planning_comparison, reproduce,
                          write_manifest)
from .training import train

log = logging.getLogger("guided_dynamics")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _kind(text: str) -> str:
    return text.replace("-", "_")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", type=Path, default=Path("runs"))
    common.add_argument("--object", type=_kind, choices=KINDS, metavar="{" + ",".join(k.replace("_", "-") for k in KINDS) + "}",
                        help="object kind (overrides config)")
    common.add_argument("--data-size", type=int, help="number of training interactions")
    common.add_argument("--guided", action=argparse.BooleanOptionalAction, default=None,
                        help="restrict to guided (or --no-guided) rollouts")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="guided-dynamics", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen-data", parents=[common], help="simulate and track interactions")
    t = sub.add_parser("train", parents=[common], help="fit the network")
    t.add_argument("--data", type=Path, help="dataset from gen-data (generated when omitted)")
    for name, helptext in (("eval-dynamics", "horizon sweep against the hidden world"),
                           ("plan", "closed-loop planning toward sampled goals")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--model", type=Path, required=True, help="checkpoint from train")
    sub.add_parser("reproduce", parents=[common], help="full sweep and planning comparison")
    sub.add_parser("self-test", parents=[common], help="fast invariance and gradient checks")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    kw = {}
    if args.object:
        kw["object_kind"] = args.object
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.data_size is not None:
        if args.data_size < 1:
            raise InvalidInputError("--data-size must be >= 1")
        kw["dataset_sizes"] = (args.data_size,)
        kw["planning"] = dataclasses.replace(cfg.planning, train_size=args.data_size)
    return cfg.with_overrides(**kw) if kw else cfg


def _train_size(cfg):
    return cfg.dataset_sizes[-1] if cfg.dataset_sizes else cfg.planning.train_size


def cmd_gen_data(cfg, args):
    spec = cfg.world_spec()
    seqs = generate_dataset(spec, _train_size(cfg), cfg.seed + TRAIN_DATA_OFFSET)
    save_dataset(args.out_dir / "dataset.jsonl", spec, seqs, version="1")
    return {"sequences": len(seqs), "converged": sum(s.tracking_converged for s in seqs)}


def cmd_train(cfg, args):
    world = World.create(cfg.world_spec())
    if args.data:
        _, seqs = load_dataset(args.data)
    else:
        seqs = generate_dataset(cfg.world_spec(), _train_size(cfg), cfg.seed + TRAIN_DATA_OFFSET, world=world)
    params, curve = train(seqs, world.model_graph, dataclasses.replace(cfg.train, seed=cfg.seed))
    save_checkpoint(args.out_dir / "model.json", params, {"n_train": len(seqs)})
    write_csv(args.out_dir / "loss_curve.csv", ["epoch", "train_loss", "val_loss"], curve)
    return {"sequences": len(seqs), "final_train_loss": curve[-1][1] if curve else None}


def _modes(args):
    return (True, False) if args.guided is None else (args.guided,)


def cmd_eval_dynamics(cfg, args):
    spec = cfg.world_spec()
    world = World.create(spec)
    params = load_checkpoint(args.model)
    episodes = generate_episodes(spec, cfg.n_eval_episodes, max(cfg.horizons), cfg.seed + EVAL_DATA_OFFSET,
                                 world=world)
    rows = []
    for guided in _modes(args):
        for s in eval_dynamics(build_model(params, world, cfg), episodes, cfg.horizons, guided):
            rows.append([spec.object_kind, "", s.horizon, guided, s.mean, s.std, s.n])
    write_csv(args.out_dir / "dynamics.csv", DYNAMICS_HEADER, rows)
    return {"rows": len(rows)}


def cmd_plan(cfg, args):
    rows, summary_rows, summaries, _ = planning_comparison(cfg, load_checkpoint(args.model))
    keep = set(_modes(args))
    write_csv(args.out_dir / "planning_episodes.csv", PLANNING_HEADER, [r for r in rows if r[1] in keep])
    write_csv(args.out_dir / "planning_summary.csv", SUMMARY_HEADER, [r for r in summary_rows if r[1] in keep])
    return {str(k): v for k, v in summaries.items() if k in keep}


def cmd_reproduce(cfg, args):
    return reproduce(cfg, args.out_dir)["planning"]


def cmd_self_test(cfg, args):
    results = selftest.run(cfg.seed)
    for name, ok, value in results:
        print(f"{'PASS' if ok else 'FAIL'} {name} ({float(value):.3g})")
    if not all(ok for _, ok, _ in results):
        raise RuntimeError("self-test failed")
    return {name: float(value) for name, _, value in results}


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval-dynamics": cmd_eval_dynamics,
            "plan": cmd_plan, "reproduce": cmd_reproduce, "self-test": cmd_self_test}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (InvalidInputError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](cfg, args)
        if args.command != "reproduce":
            write_manifest(args.out_dir, cfg, args.command)
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        log.debug("command failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(result, default=float, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
