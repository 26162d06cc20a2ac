"""Command-line entry point: model checking, training, evaluation, replay.

Exit codes: 0 success, 1 model diagnostics found, 2 invalid config or
unreadable input, 3 training aborted on divergence, 4 checkpoint
architecture mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from boardpush.config import ConfigError, RunConfig, load_config


def _cmd_model_check(args) -> int:
    from boardpush.model import (InvalidParameterError, ModelParams,
                                 build_robot_tree, build_skateboard_tree,
                                 validate_tree)
    try:
        params = ModelParams.load_json(args.file)
    except (OSError, json.JSONDecodeError, InvalidParameterError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    diags = params.validate()
    if not diags:
        for builder, name in ((build_robot_tree, "robot"),
                              (build_skateboard_tree, "skateboard")):
            tree = builder(params)
            diags.extend(f"{name}: {d}" for d in validate_tree(tree))
    if diags:
        for d in diags:
            print(d)
        return 1
    print("ok: model parameters and both trees are valid")
    return 0


def _load_run_config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None), getattr(args, "set", []) or [])
    diags = cfg.validate()
    if diags:
        raise ConfigError(diags[0].split(":")[0], "; ".join(diags))
    return cfg


def _cmd_train(args) -> int:
    from boardpush.learn.train import TrainingDiverged, train
    try:
        cfg = _load_run_config(args)
    except (OSError, json.JSONDecodeError, ConfigError) as e:
        print(f"error: invalid config: {e}", file=sys.stderr)
        return 2
    run_dir = args.run_dir
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "run.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
    log = None if args.quiet else print
    try:
        final = train(cfg.train, run_dir, model_params=cfg.model,
                      episode=cfg.env, schedule=cfg.gait,
                      reward_cfg=cfg.reward, resume=args.resume, log=log)
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    print(f"training complete; final checkpoint: {final}")
    return 0


def _cmd_eval(args) -> int:
    from boardpush.evaluate import evaluate
    from boardpush.learn.checkpoint import CheckpointError
    try:
        cfg = _load_run_config(args)
    except (OSError, json.JSONDecodeError, ConfigError) as e:
        print(f"error: invalid config: {e}", file=sys.stderr)
        return 2
    try:
        evaluate(args.checkpoint, args.episodes, args.command, args.out,
                 cfg=cfg, seed=args.seed)
    except CheckpointError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


def _cmd_replay(args) -> int:
    from boardpush.replay import TrajectoryError, replay
    try:
        written = replay(args.trajectory, args.out)
    except TrajectoryError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="boardpush",
        description="Humanoid-skateboarding simulator and PPO trainer")
    sub = p.add_subparsers(dest="command", required=True)

    p_model = sub.add_parser("model", help="model utilities")
    model_sub = p_model.add_subparsers(dest="model_command", required=True)
    p_check = model_sub.add_parser("check", help="validate a model parameter file")
    p_check.add_argument("file")
    p_check.set_defaults(fn=_cmd_model_check)

    p_train = sub.add_parser("train", help="run PPO training")
    p_train.add_argument("--config", default=None, help="run config JSON")
    p_train.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="override a dotted config key")
    p_train.add_argument("--run-dir", default="runs/latest")
    p_train.add_argument("--resume", default=None, metavar="CHECKPOINT")
    p_train.add_argument("--quiet", action="store_true")
    p_train.set_defaults(fn=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.add_argument("--command", type=float, default=0.4,
                        help="forward velocity command, m/s")
    p_eval.add_argument("--out", default="eval_out")
    p_eval.add_argument("--config", default=None)
    p_eval.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.set_defaults(fn=_cmd_eval)

    p_replay = sub.add_parser("replay", help="plot a trajectory JSONL")
    p_replay.add_argument("trajectory")
    p_replay.add_argument("--out", default="replay_out")
    p_replay.set_defaults(fn=_cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
