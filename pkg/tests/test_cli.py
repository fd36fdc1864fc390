import json
import os

import numpy as np
import pytest

from multinav.cli import main
from multinav.policy import ActorCritic, PolicyConfig


def run_cli(*argv):
    return main(list(argv))


class TestRunCommand:
    def test_straight_run_exit_zero(self, tmp_path):
        out = str(tmp_path / "m.csv")
        code = run_cli("run", "--scenario", "random", "--agents", "1",
                       "--obstacles", "0", "--controller", "straight",
                       "--trials", "2", "--scale", "6", "--out", out)
        assert code == 0
        assert os.path.exists(out)

    def test_identical_seeds_identical_csv_bytes(self, tmp_path):
        a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        argv = ["run", "--scenario", "doorway", "--agents", "3",
                "--controller", "straight", "--trials", "3", "--seed", "9",
                "--scale", "8", "--noise"]
        assert run_cli(*argv, "--out", a) == 0
        assert run_cli(*argv, "--out", b) == 0
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_unknown_controller_is_config_error(self, tmp_path):
        with pytest.raises(SystemExit):  # argparse rejects the choice
            run_cli("run", "--scenario", "circle", "--agents", "2",
                    "--controller", "warp", "--out", str(tmp_path / "m.csv"))

    def test_policy_without_checkpoint_exit_two(self, tmp_path):
        code = run_cli("run", "--scenario", "circle", "--agents", "2",
                       "--controller", "policy", "--trials", "1",
                       "--out", str(tmp_path / "m.csv"))
        assert code == 2

    def test_missing_checkpoint_exit_two(self, tmp_path):
        code = run_cli("run", "--scenario", "circle", "--agents", "2",
                       "--controller", "policy", "--trials", "1",
                       "--checkpoint", str(tmp_path / "nope.json"),
                       "--out", str(tmp_path / "m.csv"))
        assert code == 2


class TestAblationPlumbing:
    def _run_with_log(self, tmp_path, ablation):
        log = str(tmp_path / f"{ablation}.jsonl")
        code = run_cli("run", "--scenario", "random", "--agents", "2",
                       "--obstacles", "0", "--scale", "6",
                       "--controller", "straight", "--trials", "1",
                       "--seed", "4", "--ablation", ablation,
                       "--log", log, "--log-obs", "--log-rewards",
                       "--out", str(tmp_path / "m.csv"))
        assert code == 0
        return [json.loads(l) for l in open(log)]

    def test_no_gnn_zeroes_node_count(self, tmp_path):
        records = self._run_with_log(tmp_path, "no-gnn")
        obs = [r for r in records if r["type"] == "observation"]
        assert obs
        assert all(r["node_count"] == 0 for r in obs)

    def test_baseline_run_sees_neighbors(self, tmp_path):
        records = self._run_with_log(tmp_path, "none")
        obs = [r for r in records if r["type"] == "observation"]
        assert any(r["node_count"] > 0 for r in obs)

    def test_no_gp_zeroes_ogp_and_targets_goal(self, tmp_path):
        records = self._run_with_log(tmp_path, "no-gp")
        obs = [r for r in records if r["type"] == "observation"]
        assert obs
        assert all(r["o_gp"] == [0.0, 0.0, 0.0] for r in obs)
        header = next(r for r in records if r["type"] == "header")
        goals = [r["goal"] for r in header["scenario"]["robots"]]
        rewards = [r for r in records if r["type"] == "reward"]
        assert rewards
        for r in rewards:
            gx, gy = goals[r["agent"]]
            assert r["target"] == pytest.approx([gx, gy])

    def test_default_targets_running_point_not_goal(self, tmp_path):
        records = self._run_with_log(tmp_path, "none")
        header = next(r for r in records if r["type"] == "header")
        goals = [r["goal"] for r in header["scenario"]["robots"]]
        rewards = [r for r in records if r["type"] == "reward"][:20]
        off_goal = sum(
            1 for r in rewards
            if np.hypot(*(np.array(r["target"]) - goals[r["agent"]])) > 0.5)
        assert off_goal > 0  # early targets sit on the path, far from goals


class TestTrainCommand:
    def test_tiny_training_run(self, tmp_path):
        cfg = {
            "scenarios": [{"kind": "random", "scale": 5.0, "num_agents": 1,
                           "num_obstacles": 0, "rng_seed": 0,
                           "max_episode_time": 8.0}],
            "train": {"total_env_steps": 600, "rollout_length": 128,
                      "num_parallel_envs": 2, "minibatch_size": 128,
                      "ppo_epochs": 2, "seed": 3, "eval_every": 100000,
                      "eval_episodes": 1},
            "policy": {"conv_channels": [3, 4], "conv_kernel": 3,
                       "node_hidden": 6, "attention_heads": 2,
                       "attention_head_dim": 3, "score_dim": 5,
                       "trunk": [12, 12]},
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out = str(tmp_path / "train_out")
        assert run_cli("train", "--config", str(cfg_path), "--out", out) == 0
        assert os.path.exists(os.path.join(out, "policy.json"))
        assert os.path.exists(os.path.join(out, "training_curve.csv"))
        header = open(os.path.join(out, "training_curve.csv")).readline()
        assert header.strip() == ("step,mean_reward,success_rate,actor_loss,"
                                  "critic_loss,kl,clip_fraction")

    def test_bad_config_exit_two(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert run_cli("train", "--config", str(p)) == 2

    def test_missing_config_exit_two(self, tmp_path):
        assert run_cli("train", "--config", str(tmp_path / "none.json")) == 2


class TestReplayCommand:
    def test_replay_from_run_log(self, tmp_path):
        log = str(tmp_path / "t.jsonl")
        assert run_cli("run", "--scenario", "circle", "--agents", "2",
                       "--scale", "6", "--controller", "straight",
                       "--trials", "1", "--log", log,
                       "--out", str(tmp_path / "m.csv")) == 0
        svg = str(tmp_path / "t.svg")
        assert run_cli("replay", "--log", log, "--out", svg) == 0
        assert open(svg).read().startswith("<svg")

    def test_replay_missing_log_exit_two(self, tmp_path):
        assert run_cli("replay", "--log", str(tmp_path / "none.jsonl"),
                       "--out", str(tmp_path / "x.svg")) == 2


class TestPolicyEndToEnd:
    def test_run_with_checkpoint(self, tmp_path):
        ckpt = str(tmp_path / "p.json")
        ActorCritic(PolicyConfig.reduced(), seed=2).save(ckpt)
        code = run_cli("run", "--scenario", "random", "--agents", "1",
                       "--obstacles", "0", "--scale", "5",
                       "--controller", "policy", "--checkpoint", ckpt,
                       "--trials", "1", "--out", str(tmp_path / "m.csv"))
        assert code == 0
