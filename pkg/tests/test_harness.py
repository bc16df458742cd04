import dataclasses
import json

import numpy as np
import pytest

from guided_dynamics.errors import InvalidInputError
from guided_dynamics.harness import cli
from guided_dynamics.harness.config import ExperimentConfig, GuidanceConfig
from guided_dynamics.harness.evaluation import eval_planning, fmt, planning_summary, write_csv
from guided_dynamics.harness.experiments import build_model
from guided_dynamics.harness.training import (TrainConfig, dataset_loss, make_pairs, mirror_across_push,
                                              new_params, split_indices, train)
from guided_dynamics.planner import CemConfig
from guided_dynamics.worlds import World, WorldSpec, generate_dataset

SMALL = TrainConfig(epochs=40, lr=3e-3, batch_size=4, n_layers=2, hidden_dim=16)


@pytest.fixture(scope="module")
def tb():
    spec = WorldSpec("tblock")
    world = World.create(spec)
    return spec, world, generate_dataset(spec, 6, 99, world=world)


def test_config_round_trip_and_digest(tmp_path):
    cfg = ExperimentConfig(object_kind="cloth", seed=3, horizons=(1, 3))
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    back = ExperimentConfig.load(path)
    assert back == cfg and back.digest() == cfg.digest()
    assert cfg.with_overrides(seed=4).digest() != cfg.digest()


@pytest.mark.parametrize("bad", [{"horizons": [4, 1]}, {"horizons": [0, 1]}, {"dataset_sizes": [0]},
                                 {"n_eval_episodes": 0}, {"object_kind": "jelly"}, {"colour": 1},
                                 {"train": {"epochz": 3}}, {"world": {"gravity_x": 1}}])
def test_config_rejects_bad_values(bad):
    with pytest.raises(InvalidInputError):
        ExperimentConfig.from_dict(bad)


def test_guidance_config_gains():
    g = GuidanceConfig(kp=3.0, ki=0.5, kd=1.0, max_iters=10, planning_max_iters=4)
    assert (g.gains.kp, g.gains.ki, g.gains.kd) == (3.0, 0.5, 1.0)
    assert g.convergence().max_iters == 10 and g.convergence(planning=True).max_iters == 4


def test_mirror_is_an_involution_fixing_the_push_line(rng):
    s, e = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    pts = rng.normal(size=(3, 7, 3))
    twice = mirror_across_push(mirror_across_push(pts, s, e), s, e)
    assert np.allclose(twice, pts, atol=1e-12)
    on_line = np.concatenate([(s + 0.3 * (e - s))[:, None, :], np.ones((3, 1, 1))], axis=-1)
    assert np.allclose(mirror_across_push(on_line, s, e), on_line, atol=1e-12)


def test_split_is_disjoint_and_covers():
    tr, va = split_indices(20, 0.1, seed=5)
    assert len(va) == 2 and sorted(np.r_[tr, va]) == list(range(20))
    tr1, va1 = split_indices(1, 0.1, seed=5)
    assert list(tr1) == [0] and len(va1) == 0


def test_zero_epochs_returns_init_params(tb):
    _, world, seqs = tb
    cfg = dataclasses.replace(SMALL, epochs=0)
    params, curve = train(seqs, world.model_graph, cfg)
    assert curve == [] and np.array_equal(params.flat(), new_params(world.model_graph, cfg).flat())


def test_training_reduces_loss_and_is_deterministic(tb):
    _, world, seqs = tb
    pairs = make_pairs(seqs)
    init = dataset_loss(new_params(world.model_graph, SMALL), pairs, world.model_graph.pairs)
    p1, curve = train(seqs, world.model_graph, SMALL)
    p2, _ = train(seqs, world.model_graph, SMALL)
    assert np.array_equal(p1.flat(), p2.flat())
    assert len(curve) == SMALL.epochs
    assert dataset_loss(p1, pairs, world.model_graph.pairs) < 0.5 * init


def test_single_goal_planning_record_and_infinite_threshold(tb):
    spec, world, _ = tb
    cfg = ExperimentConfig(guidance=GuidanceConfig(planning_max_iters=20))
    params = new_params(world.model_graph, SMALL)
    planning = dataclasses.replace(cfg.planning, cem=CemConfig(n_samples=8, n_iters=1), max_steps=1,
                                   n_goals=1, repeats=1, success_threshold=float("inf"))
    runs = eval_planning(spec, build_model(params, world, cfg, planning=True), planning, 0, True, world)
    assert len(runs) == 1
    s = planning_summary(runs, runs)
    assert s["success_rate"] == 1.0 and s["cliffs_delta"] == 0.0


def test_csv_formatting_is_stable(tmp_path):
    assert fmt(True) == "1" and fmt(np.float64(0.1)) == "0.1" and fmt(3) == "3"
    write_csv(tmp_path / "a.csv", ["a", "b"], [[1, 0.25], [False, float("inf")]])
    assert (tmp_path / "a.csv").read_text() == "a,b\n1,0.25\n0,inf\n"


def test_cli_usage_errors_exit_one(tmp_path, capsys):
    assert cli.main(["frobnicate"]) == 1
    assert cli.main(["self-test", "--config", str(tmp_path / "missing.json")]) == 1
    (tmp_path / "bad.json").write_text(json.dumps({"horizons": [2, 1]}))
    assert cli.main(["self-test", "--config", str(tmp_path / "bad.json")]) == 1
    assert cli.main(["gen-data", "--data-size", "0", "--out-dir", str(tmp_path)]) == 1


def test_cli_self_test_passes(tmp_path, capsys):
    assert cli.main(["self-test", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 4
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "self-test" and len(manifest["config_digest"]) == 16


def test_cli_gen_data_is_deterministic(tmp_path):
    for run in ("a", "b"):
        assert cli.main(["gen-data", "--object", "stiff-rope", "--data-size", "2", "--seed", "4",
                         "--out-dir", str(tmp_path / run)]) == 0
    assert (tmp_path / "a" / "dataset.jsonl").read_bytes() == (tmp_path / "b" / "dataset.jsonl").read_bytes()


def test_cli_train_then_eval_and_plan(tmp_path):
    smoke = str(__import__("pathlib").Path(__file__).resolve().parents[1] / "configs" / "smoke.json")
    base = ["--config", smoke, "--out-dir", str(tmp_path)]
    assert cli.main(["gen-data"] + base) == 0
    assert cli.main(["train", "--data", str(tmp_path / "dataset.jsonl")] + base) == 0
    model = str(tmp_path / "model.json")
    assert cli.main(["eval-dynamics", "--model", model, "--no-guided"] + base) == 0
    lines = (tmp_path / "dynamics.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 and all(line.split(",")[3] == "0" for line in lines[1:])
    assert cli.main(["plan", "--model", model] + base) == 0
    assert len((tmp_path / "planning_summary.csv").read_text().splitlines()) == 3
    assert cli.main(["plan", "--model", str(tmp_path / "nope.json")] + base) == 2
