import json
import os

import numpy as np
import pytest

from boardpush.cli import main
from boardpush.model import ModelParams

TOY_ARGS = ["--set", 'train.task="toy_deck"', "--set", "train.n_envs=4",
            "--set", "train.total_steps=512", "--set", "train.horizon=16",
            "--set", "train.hidden=[16,16]", "--set", "train.minibatches=2"]


def strip_perf(path):
    out = []
    for line in open(path):
        d = json.loads(line)
        d.pop("perf", None)
        out.append(json.dumps(d, sort_keys=True))
    return out


# ---------------------------------------------------------------------------
# model check


def test_model_check_ok(tmp_path, capsys):
    path = tmp_path / "model.json"
    ModelParams().save_json(path)
    assert main(["model", "check", str(path)]) == 0
    assert "ok" in capsys.readouterr().out


def test_model_check_reports_diagnostics(tmp_path, capsys):
    params = ModelParams()
    d = params.to_dict()
    d["skateboard"]["truck_stiffness"] = -1.0
    path = tmp_path / "model.json"
    with open(path, "w") as fh:
        json.dump(d, fh)
    assert main(["model", "check", str(path)]) == 1
    assert "truck_stiffness" in capsys.readouterr().out


def test_model_check_missing_file():
    assert main(["model", "check", "/nonexistent/nope.json"]) == 2


# ---------------------------------------------------------------------------
# train


def test_train_toy_run(tmp_path):
    run = str(tmp_path / "run")
    rc = main(["train", *TOY_ARGS, "--run-dir", run, "--quiet"])
    assert rc == 0
    assert os.path.getsize(os.path.join(run, "metrics.jsonl")) > 0
    assert os.path.exists(os.path.join(run, "run.json"))
    assert os.path.exists(os.path.join(run, "checkpoint_last.bpck"))


def test_train_missing_config_file(tmp_path):
    rc = main(["train", "--config", "/nonexistent/cfg.json",
               "--run-dir", str(tmp_path / "r")])
    assert rc == 2


def test_train_invalid_config(tmp_path):
    rc = main(["train", "--set", "train.gamma=2.0",
               "--run-dir", str(tmp_path / "r")])
    assert rc == 2


def test_train_deterministic_metrics(tmp_path):
    r1, r2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["train", *TOY_ARGS, "--run-dir", r1, "--quiet"]) == 0
    assert main(["train", *TOY_ARGS, "--run-dir", r2, "--quiet"]) == 0
    m1 = strip_perf(os.path.join(r1, "metrics.jsonl"))
    m2 = strip_perf(os.path.join(r2, "metrics.jsonl"))
    assert m1 == m2


def test_run_json_reproduces_run(tmp_path):
    r1, r2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["train", *TOY_ARGS, "--run-dir", r1, "--quiet"]) == 0
    # re-run purely from the resolved config
    assert main(["train", "--config", os.path.join(r1, "run.json"),
                 "--run-dir", r2, "--quiet"]) == 0
    assert strip_perf(os.path.join(r1, "metrics.jsonl")) == \
        strip_perf(os.path.join(r2, "metrics.jsonl"))


# ---------------------------------------------------------------------------
# eval


@pytest.fixture(scope="module")
def skateboard_checkpoint(tmp_path_factory):
    # an untrained (random-weights) checkpoint for the full task
    from boardpush.env import BatchEnv
    from boardpush.learn import PolicyParams, save_policy
    path = tmp_path_factory.mktemp("ck") / "rand.bpck"
    env = BatchEnv(1, seed=0, n_workers=1)
    p = PolicyParams.create(env.obs_dim, env.act_dim, env.act_center,
                            env.act_half, hidden=(32, 32), seed=0)
    save_policy(path, p, {"schema": 1, "task": "skateboard",
                          "arch": {"obs_dim": env.obs_dim,
                                   "act_dim": env.act_dim,
                                   "hidden": [32, 32]}})
    env.close()
    return str(path)


def test_eval_random_checkpoint(tmp_path, skateboard_checkpoint, capsys):
    out = str(tmp_path / "ev")
    rc = main(["eval", skateboard_checkpoint, "--episodes", "2",
               "--command", "0.4", "--out", out, "--seed", "1"])
    assert rc == 0
    report = json.load(open(os.path.join(out, "report.json")))
    assert report["command_vx"] == 0.4
    assert report["episodes"] == 2
    assert os.path.getsize(os.path.join(out, "trajectory.jsonl")) > 0
    with open(os.path.join(out, "trajectory.csv")) as fh:
        header = fh.readline().strip().split(",")
    assert header[0] == "t"
    assert header[1] == "q_r0"
    assert "deck_lin_track" in header


def test_eval_zero_episodes(tmp_path, skateboard_checkpoint):
    out = str(tmp_path / "ev0")
    rc = main(["eval", skateboard_checkpoint, "--episodes", "0", "--out", out])
    assert rc == 0
    report = json.load(open(os.path.join(out, "report.json")))
    assert report["episodes"] == 0


def test_eval_architecture_mismatch(tmp_path):
    from boardpush.learn import PolicyParams, save_policy
    path = tmp_path / "wrong.bpck"
    p = PolicyParams.create(4, 1, np.zeros(1), np.ones(1), hidden=(8, 8))
    save_policy(path, p, {"schema": 1, "task": "toy_deck",
                          "arch": {"obs_dim": 4, "act_dim": 1,
                                   "hidden": [8, 8]}})
    rc = main(["eval", str(path), "--episodes", "1",
               "--out", str(tmp_path / "o")])
    assert rc == 4


# ---------------------------------------------------------------------------
# replay


def test_replay_from_eval(tmp_path, skateboard_checkpoint):
    ev = str(tmp_path / "ev")
    main(["eval", skateboard_checkpoint, "--episodes", "1", "--out", ev])
    out = str(tmp_path / "plots")
    rc = main(["replay", os.path.join(ev, "trajectory.jsonl"), "--out", out])
    assert rc == 0
    files = sorted(os.listdir(out))
    assert files == ["deck_velocity.svg", "phase_contact.svg",
                     "reward_terms.svg", "summary.csv"]
    for f in files:
        assert os.path.getsize(os.path.join(out, f)) > 0


def test_replay_truncated_line(tmp_path, capsys):
    path = tmp_path / "bad.jsonl"
    with open(path, "w") as fh:
        fh.write('{"t": 0.02, "q_board": [0,0,0,1,0,0,0,0,0]}\n')
        fh.write('{"t": 0.04, "q_boa')
    rc = main(["replay", str(path), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "line 2" in capsys.readouterr().err


def test_replay_empty_trajectory(tmp_path, capsys):
    path = tmp_path / "empty.jsonl"
    open(path, "w").close()
    rc = main(["replay", str(path), "--out", str(tmp_path / "o")])
    assert rc == 0
    err = capsys.readouterr().err
    assert "empty" in err
    assert os.path.exists(tmp_path / "o" / "summary.csv")
