"""End-to-end command-line runs against small worlds and tiny budgets."""

import csv
import json

import numpy as np
import pytest

import worlds
from coneplan.cli import main
from coneplan.nets import PolicyBundle
from coneplan.simulate import compute_metrics, load_trace
from coneplan.worldmap import distance_field, grid_from_dict, grid_to_dict

TRAIN_FLAGS = [
    "--set", "hyper.rollout_steps=32",
    "--set", "hyper.minibatch=16",
    "--set", "hyper.epochs=1",
]


@pytest.fixture(scope="module")
def world_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("world")
    assert main(["gen-world", "--seed", "7", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def corridor_world(tmp_path_factory):
    """Hand-assembled world document over the two-homotopy test grid."""
    grid = worlds.corridor_world()
    doc = {"grid": grid_to_dict(grid), "start": [-3.0, 0.0], "goal": [3.0, 0.0]}
    path = tmp_path_factory.mktemp("cw") / "world.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    rc = main(
        ["train", "--steps", "96", "--beta", "0.5", "--out", str(out), *TRAIN_FLAGS]
    )
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def eval_run(tmp_path_factory, corridor_world, tiny_run):
    out = tmp_path_factory.mktemp("eval")
    rc = main(
        [
            "eval",
            "--world", str(corridor_world),
            "--checkpoint", str(tiny_run / "policy_final.ckpt"),
            "--no-enumerate",
            "--eval-seeds", "1",
            "--save-traces",
            "--out", str(out),
        ]
    )
    assert rc == 0
    return out


class TestGenWorld:
    def test_reruns_are_byte_identical(self, world_dir, tmp_path):
        again = tmp_path / "again"
        assert main(["gen-world", "--seed", "7", "--out", str(again)]) == 0
        for name in ("world.json", "world.png", "config.json", "provenance.json"):
            assert (world_dir / name).read_bytes() == (again / name).read_bytes()

    def test_seed_changes_world(self, world_dir, tmp_path):
        other = tmp_path / "other"
        assert main(["gen-world", "--seed", "8", "--out", str(other)]) == 0
        a = json.loads((world_dir / "world.json").read_text())
        b = json.loads((other / "world.json").read_text())
        assert a["grid"]["cells"] != b["grid"]["cells"]

    def test_world_document(self, world_dir):
        doc = json.loads((world_dir / "world.json").read_text())
        assert set(doc) == {"grid", "start", "goal", "seed", "config_hash"}
        grid = grid_from_dict(doc["grid"])
        assert grid.resolution == 0.1
        prov = json.loads((world_dir / "provenance.json").read_text())
        assert prov["command"] == "gen-world"
        assert prov["seed"] == 7
        assert prov["config_hash"] == doc["config_hash"]

    def test_override_echoed_in_config(self, tmp_path):
        out = tmp_path / "small"
        assert main(
            ["gen-world", "--set", "world.side=4.0", "--out", str(out)]
        ) == 0
        echoed = json.loads((out / "config.json").read_text())
        assert echoed["world"]["side"] == 4.0


class TestGenTraj:
    def test_trajectories_clear_obstacles(self, world_dir, tmp_path):
        out = tmp_path / "traj"
        rc = main(
            [
                "gen-traj",
                "--world", str(world_dir / "world.json"),
                "--count", "2",
                "--out", str(out),
            ]
        )
        assert rc == 0
        csvs = sorted(out.glob("traj_*.csv"))
        assert len(csvs) == 2
        doc = json.loads((world_dir / "world.json").read_text())
        dfield = distance_field(grid_from_dict(doc["grid"]))
        for p in csvs:
            pts = np.loadtxt(p, delimiter=",", skiprows=1)
            assert pts.ndim == 2 and pts.shape[1] == 2
            assert float(dfield.at_many(pts).min()) >= 0.15
        assert (out / "trajectories.png").exists()


class TestTrain:
    def test_checkpoint_metadata(self, tiny_run):
        meta = PolicyBundle.read_meta(tiny_run / "policy_final.ckpt")
        assert meta["env_steps"] == 96
        assert meta["reward"]["beta"] == 0.5
        assert meta["world"]["resolution"] == 0.1
        assert meta["obs"]["obs_dim"] == 1268
        echoed = json.loads((tiny_run / "config.json").read_text())
        assert echoed["reward"]["beta"] == 0.5

    def test_learning_curve_artifacts(self, tiny_run):
        with open(tiny_run / "training_log.csv") as f:
            log_rows = list(csv.DictReader(f))
        assert len(log_rows) == 3
        assert [int(r["update"]) for r in log_rows] == [1, 2, 3]
        assert int(log_rows[-1]["env_steps"]) == 96
        assert (tiny_run / "learning_curve.png").exists()

    def test_resume_continues_counters(self, tiny_run, tmp_path):
        out = tmp_path / "more"
        rc = main(
            [
                "train",
                "--steps", "32",
                "--beta", "0.5",
                "--resume", str(tiny_run / "policy_final.ckpt"),
                "--out", str(out),
                *TRAIN_FLAGS,
            ]
        )
        assert rc == 0
        meta = PolicyBundle.read_meta(out / "policy_final.ckpt")
        assert meta["env_steps"] == 128
        assert meta["update"] == 4


class TestEval:
    def test_metrics_document(self, eval_run):
        doc = json.loads((eval_run / "metrics.json").read_text())
        assert set(doc["rows"]) == {"policy_final", "baseline"}
        base = doc["rows"]["baseline"]
        assert base["trigger_freq_mean"] == 1.0
        assert base["trigger_freq_std"] == 0.0
        assert base["opening_deg_mean"] is None
        assert base["episodes"] == 1
        for label in ("policy_final", "baseline"):
            eps = doc["episodes"][label]
            assert len(eps) == 1
            assert "trigger_positions" not in eps[0]
        for name in (
            "eval_metrics.png",
            "trigger_heatmap.png",
            "heatmap.csv",
            "config.json",
            "provenance.json",
        ):
            assert (eval_run / name).exists()

    def test_saved_traces_match_episode_metrics(self, eval_run):
        doc = json.loads((eval_run / "metrics.json").read_text())
        trace = load_trace(eval_run / "traces" / "baseline_000.ndjson")
        m = compute_metrics(trace)
        ep = doc["episodes"]["baseline"][0]
        assert m.e_med == ep["e_med"]
        assert m.t_total == ep["t_total"]
        assert m.trigger_freq == ep["trigger_freq"]

    def test_rerun_is_byte_identical(self, eval_run, corridor_world, tiny_run, tmp_path):
        again = tmp_path / "again"
        rc = main(
            [
                "eval",
                "--world", str(corridor_world),
                "--checkpoint", str(tiny_run / "policy_final.ckpt"),
                "--no-enumerate",
                "--eval-seeds", "1",
                "--out", str(again),
            ]
        )
        assert rc == 0
        assert (eval_run / "metrics.json").read_bytes() == (again / "metrics.json").read_bytes()
        assert (eval_run / "heatmap.csv").read_bytes() == (again / "heatmap.csv").read_bytes()

    def test_refuses_mismatched_checkpoint(self, corridor_world, tiny_run, tmp_path):
        bundle = PolicyBundle.load(tiny_run / "policy_final.ckpt")
        meta = PolicyBundle.read_meta(tiny_run / "policy_final.ckpt")
        meta["world"]["resolution"] = 0.05
        doctored = tmp_path / "doctored.ckpt"
        bundle.save(doctored, meta)
        rc = main(
            [
                "eval",
                "--world", str(corridor_world),
                "--checkpoint", str(doctored),
                "--out", str(tmp_path / "nope"),
            ]
        )
        assert rc == 2


class TestHeatmapCommand:
    def test_density_accounts_for_every_trigger(self, eval_run, corridor_world, tmp_path):
        out = tmp_path / "hm"
        trace_paths = sorted(str(p) for p in (eval_run / "traces").glob("*.ndjson"))
        rc = main(
            [
                "heatmap",
                "--world", str(corridor_world),
                "--traces", *trace_paths,
                "--out", str(out),
            ]
        )
        assert rc == 0
        hist = np.loadtxt(out / "heatmap.csv", delimiter=",")
        expected = sum(
            compute_metrics(load_trace(p)).triggers for p in trace_paths
        )
        assert int(hist.sum()) == expected
        density = json.loads((out / "density.json").read_text())
        assert density["total"] == expected
        assert set(density["counts"]) == {"node", "edge", "open"}
        assert sum(density["counts"].values()) == expected
        assert (out / "heatmap.png").exists()


class TestReplay:
    def test_replay_matches_eval_episode(self, eval_run, corridor_world, tmp_path):
        out = tmp_path / "rp"
        trace = eval_run / "traces" / "baseline_000.ndjson"
        rc = main(
            ["replay", str(trace), "--world", str(corridor_world), "--out", str(out)]
        )
        assert rc == 0
        doc = json.loads((out / "metrics.json").read_text())
        eval_doc = json.loads((eval_run / "metrics.json").read_text())
        ep = eval_doc["episodes"]["baseline"][0]
        for key in ("e_med", "t_total", "trigger_freq", "success", "d_clear"):
            assert doc["metrics"][key] == ep[key]
        assert (out / "replay.png").exists()


class TestExitCodes:
    def test_missing_world_is_config_error(self, tmp_path):
        rc = main(
            [
                "gen-traj",
                "--world", str(tmp_path / "none.json"),
                "--out", str(tmp_path / "o"),
            ]
        )
        assert rc == 2

    def test_unknown_override_key(self, tmp_path):
        rc = main(
            ["gen-world", "--set", "reward.betaa=1", "--out", str(tmp_path / "o")]
        )
        assert rc == 2

    def test_malformed_override(self, tmp_path):
        rc = main(["gen-world", "--set", "reward.beta", "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_missing_trace_is_config_error(self, tmp_path):
        rc = main(
            ["replay", str(tmp_path / "none.ndjson"), "--out", str(tmp_path / "o")]
        )
        assert rc == 2

    def test_impossible_world_is_generation_error(self, tmp_path):
        rc = main(
            [
                "gen-world",
                "--set", "world.n_obstacles=200",
                "--out", str(tmp_path / "o"),
            ]
        )
        assert rc == 3
