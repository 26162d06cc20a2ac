"""Run configuration: one JSON document merging model, environment, gait,
reward and training sections, with dotted-key overrides and validation."""

from __future__ import annotations

import dataclasses
import json

from boardpush.env import EpisodeConfig
from boardpush.gait import GaitSchedule
from boardpush.learn.ppo import TrainConfig
from boardpush.model import ModelParams
from boardpush.rewards import RewardConfig

CONFIG_SCHEMA = 1


class ConfigError(ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


def _fill(dc_obj, section: dict, prefix: str):
    names = {f.name: f for f in dataclasses.fields(dc_obj)}
    for key, val in section.items():
        if key not in names:
            raise ConfigError(f"{prefix}.{key}", "unknown field")
        if isinstance(val, list):
            val = tuple(val)
        setattr(dc_obj, key, val)
    return dc_obj


@dataclasses.dataclass
class RunConfig:
    seed: int = 0
    model: ModelParams = dataclasses.field(default_factory=ModelParams)
    env: EpisodeConfig = dataclasses.field(default_factory=EpisodeConfig)
    gait: GaitSchedule = dataclasses.field(default_factory=GaitSchedule)
    reward: RewardConfig = dataclasses.field(default_factory=RewardConfig)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if "schema" in d and d["schema"] != CONFIG_SCHEMA:
            raise ConfigError("schema", f"expected {CONFIG_SCHEMA}, got {d['schema']!r}")
        cfg = cls()
        for key in d:
            if key not in ("schema", "seed", "model", "env", "gait", "reward", "train"):
                raise ConfigError(key, "unknown section")
        # the top-level seed is canonical; accept train.seed as a fallback
        cfg.seed = int(d.get("seed", d.get("train", {}).get("seed", 0)))
        if "model" in d:
            md = dict(d["model"])
            md.setdefault("schema", 1)
            cfg.model = ModelParams.from_dict(md)
        if "env" in d:
            _fill(cfg.env, d["env"], "env")
        if "gait" in d:
            g = d["gait"]
            for k in g:
                if k not in ("t_double", "t_single", "smooth_width"):
                    raise ConfigError(f"gait.{k}", "unknown field")
            try:
                cfg.gait = GaitSchedule(
                    t_double=float(g.get("t_double", 0.75)),
                    t_single=float(g.get("t_single", 1.0)),
                    smooth_width=float(g.get("smooth_width", 0.05)))
            except ValueError as e:
                raise ConfigError("gait", str(e)) from e
        if "reward" in d:
            _fill(cfg.reward, d["reward"], "reward")
        if "train" in d:
            _fill(cfg.train, d["train"], "train")
        cfg.train.seed = cfg.seed
        return cfg

    def validate(self) -> list:
        out = []
        out.extend(self.model.validate())
        out.extend(self.env.validate())
        out.extend(self.reward.validate())
        out.extend(self.train.validate())
        return out

    def to_dict(self) -> dict:
        model = self.model.to_dict()
        model.pop("schema", None)
        return {
            "schema": CONFIG_SCHEMA,
            "seed": self.seed,
            "model": model,
            "env": {f.name: (list(v) if isinstance(v := getattr(self.env, f.name), tuple) else v)
                    for f in dataclasses.fields(self.env)},
            "gait": {"t_double": self.gait.t_double, "t_single": self.gait.t_single,
                     "smooth_width": self.gait.smooth_width},
            "reward": {f.name: getattr(self.reward, f.name)
                       for f in dataclasses.fields(self.reward)},
            "train": {f.name: (list(v) if isinstance(v := getattr(self.train, f.name), tuple) else v)
                      for f in dataclasses.fields(self.train)},
        }


def parse_override(text: str):
    """`dotted.key=value`; value parsed as JSON, falling back to a string."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(text, "override must look like section.key=value")
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.strip(), val


def apply_overrides(d: dict, overrides) -> dict:
    for text in overrides:
        key, val = parse_override(text)
        parts = key.split(".")
        node = d
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(key, f"cannot descend into non-object {p!r}")
        node[parts[-1]] = val
    return d


def load_config(path=None, overrides=()) -> RunConfig:
    d = {}
    if path is not None:
        with open(path) as fh:
            d = json.load(fh)
    apply_overrides(d, overrides)
    return RunConfig.from_dict(d)
