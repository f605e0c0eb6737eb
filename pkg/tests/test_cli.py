import csv
import json

import pytest
import yaml

from quadlab.cli import main

TINY_PPO = {"batch_size": 8, "minibatch": 4, "epochs": 1, "num_envs": 2, "hidden": [4]}
GAP_SCENARIO = {"terrain": {"kind": "gaps", "seed": 0}, "action": {"scenario": "gap"},
                "observation": "case-01-feet-dist", "reward": {"kind": "gap"}, "horizon": 0.1}


def write_cfg(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_invalid_hidden_sizes_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"training": {"ppo": {"hidden": [64, -1]}}})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "training.ppo.hidden" in capsys.readouterr().err


def test_bad_budget_and_parallel(tmp_path):
    with pytest.raises(SystemExit):
        main(["train", "--budget", "lots"])
    assert main(["run", "--parallel", "0", "--out", str(tmp_path)]) == 2


def test_run_then_replay(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"scenario": {"horizon": 1.0}, "evaluation": {"episodes": 2}})
    out = tmp_path / "run"
    assert main(["run", "--config", cfg, "--seed", "2", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["episode_seeds"] == [2000, 2001]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "run" and manifest["seeds"] == [2000, 2001]
    assert len(manifest["config_hash"]) == 64
    log = out / "episode_002000.csv"
    assert (out / "episode_002000.meta.json").exists()
    capsys.readouterr()
    assert main(["replay", str(log)]) == 0
    replayed = json.loads(capsys.readouterr().out)
    assert replayed["mean_velocity"] == pytest.approx(report["episodes"][0]["mean_velocity"])


def test_parallel_run_matches_serial(tmp_path):
    cfg = write_cfg(tmp_path, {"scenario": {"horizon": 0.3}, "evaluation": {"episodes": 2}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--parallel", "2"]) == 0
    for name in ("episode_000000.csv", "episode_000001.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_truncated_log_exit_2_with_line(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"scenario": {"horizon": 0.2}, "evaluation": {"episodes": 1}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    log = tmp_path / "r" / "episode_000000.csv"
    lines = log.read_text().splitlines()
    lines[4] = lines[4][: len(lines[4]) // 2]
    log.write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert main(["replay", str(log)]) == 2
    assert "line 5" in capsys.readouterr().err


def test_toy_train_and_resume(tmp_path):
    data = {"training": {"env": "toy", "checkpoint_every": 1, "eval_episodes": 0,
                         "ppo": {**TINY_PPO, "batch_size": 40, "num_envs": 2}}}
    cfg = write_cfg(tmp_path, data)
    out = tmp_path / "t"
    assert main(["train", "--config", cfg, "--budget", "80", "--out", str(out)]) == 0
    assert (out / "final.npz").exists() and len(rows(out / "curve.csv")) == 2
    assert sorted(p.name for p in (out / "checkpoints").iterdir())
    out2 = tmp_path / "t2"
    # the budget is the total sample target, so a resumed run adds one update
    assert main(["train", "--config", cfg, "--budget", "120", "--out", str(out2),
                 "--resume", str(out / "final.npz")]) == 0
    curve = rows(out2 / "curve.csv")
    assert [int(r["update"]) for r in curve] == [1, 2, 3]
    assert json.loads((out2 / "manifest.json").read_text())["samples"] == 120
    other = write_cfg(tmp_path, {**data, "seeds": [5]}, "other.yaml")
    assert main(["train", "--config", other, "--out", str(tmp_path / "t3"),
                 "--resume", str(out / "final.npz")]) == 2
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "t4"),
                 "--resume", str(tmp_path / "missing.npz")]) == 2


def test_reward_sweep_writes_27_rows(tmp_path):
    cfg = write_cfg(tmp_path, {"scenario": GAP_SCENARIO, "training": {"ppo": TINY_PPO},
                               "sweep": {"eval_episodes": 1}})
    out = tmp_path / "sw"
    assert main(["sweep-rewards", "--config", cfg, "--budget", "8", "--out", str(out)]) == 0
    table = rows(out / "reward_sweep.csv")
    assert [int(r["case"]) for r in table] == list(range(1, 28))
    assert table[22]["viability"] == "high" and table[22]["cot_level"] == "medium"
    assert all(0.0 <= float(r["success_rate"]) <= 1.0 for r in table)


def test_observation_sweep_writes_13_rows(tmp_path):
    cfg = write_cfg(tmp_path, {"scenario": GAP_SCENARIO, "training": {"ppo": TINY_PPO},
                               "sweep": {"eval_episodes": 1}})
    out = tmp_path / "so"
    assert main(["sweep-observations", "--config", cfg, "--budget", "8", "--out", str(out)]) == 0
    table = rows(out / "observation_sweep.csv")
    assert len(table) == 13 and len({r["name"] for r in table}) == 13


def test_sweep_needs_gap_terrain(tmp_path, capsys):
    assert main(["sweep-rewards", "--out", str(tmp_path)]) == 2
    assert "gaps" in capsys.readouterr().err


def test_extended_gait_from_checkpoint(tmp_path):
    flat = {"horizon": 0.5, "v_des_range": [1.0, 1.5]}
    cfg = write_cfg(tmp_path, {"scenario": flat, "training": {"ppo": TINY_PPO, "eval_episodes": 0}})
    assert main(["train", "--config", cfg, "--budget", "8", "--out", str(tmp_path / "tr")]) == 0
    out = tmp_path / "eg"
    assert main(["extended-gait", "--config", cfg, "--checkpoint", str(tmp_path / "tr" / "final.npz"),
                 "--scales", "0.5", "1.0", "--out", str(out)]) == 0
    assert len(rows(out / "extended_gait.csv")) == 2
    assert "coefficients" in json.loads((out / "fit.json").read_text())
