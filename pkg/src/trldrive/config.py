"""Run configuration and the key=value config file format.

One assignment per line, ``#`` starts a comment, keys are dotted paths into
the nested dataclasses::

    run.episodes = 2000
    agent.learning_rate = 5e-4
    agent.hidden = 128,128
    env.n_vehicles = 15
    env.idm.v_desired = 10
    transfer.beta0 = 0.8
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

from trldrive.agent import AgentConfig
from trldrive.env import EnvConfig
from trldrive.road import Task
from trldrive.transfer import TransferConfig

ALGOS = {"dql": "plain", "dueling": "dueling"}
FULL_SCALE_EPISODES = 4000
DESK_EPISODES = 2000


class ConfigError(ValueError):
    """Invalid configuration value or file."""


@dataclass(frozen=True)
class TransferSettings:
    """Transfer periods; absolute step counts win over fractions of the planned steps."""

    beta0: float = 0.8
    tran_fraction: float = 0.5
    exp_fraction: float = 0.05
    t_tran: typing.Optional[float] = None
    t_exp: typing.Optional[float] = None

    def resolve(self, total_steps: int) -> TransferConfig:
        t_tran = self.t_tran if self.t_tran is not None else self.tran_fraction * total_steps
        t_exp = self.t_exp if self.t_exp is not None else self.exp_fraction * total_steps
        return TransferConfig(self.beta0, t_tran, t_exp)


@dataclass(frozen=True)
class RunConfig:
    algo: str = "dueling"
    task: str = "right"
    episodes: int = DESK_EPISODES
    seed: int = 0
    eval_episodes: int = 10
    finetune_episodes: int = 100
    mode: str = "frozen"
    agent: AgentConfig = field(default_factory=AgentConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    transfer: TransferSettings = field(default_factory=TransferSettings)

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {sorted(ALGOS)}, got {self.algo!r}")
        try:
            Task.parse(self.task)
        except ValueError:
            raise ConfigError(f"unknown task {self.task!r}") from None
        if self.episodes <= 0 or self.eval_episodes <= 0 or self.finetune_episodes <= 0:
            raise ConfigError("episode counts must be positive")
        if self.mode not in ("frozen", "finetune"):
            raise ConfigError("mode must be frozen or finetune")

    @property
    def head(self) -> str:
        return ALGOS[self.algo]

    @property
    def planned_steps(self) -> int:
        return self.episodes * self.env.decisions_per_episode

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


# ------------------------------------------------------------------ parsing

_NAMESPACES = {"run": (), "agent": ("agent",), "env": ("env",), "transfer": ("transfer",)}


def _coerce(text: str, tp, key: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if text.lower() in ("none", ""):
            return None
        tp = next(a for a in args if a is not type(None))
        origin, args = typing.get_origin(tp), typing.get_args(tp)
    try:
        if tp is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
        if tp is str:
            return text
        if origin is tuple:
            inner = args[0]
            return tuple(inner(p.strip()) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {getattr(tp, '__name__', tp)}") from None
    raise ConfigError(f"{key}: unsupported field type {tp}")


def _set_path(obj, path: list[str], text: str, key: str):
    if not dataclasses.is_dataclass(obj):
        raise ConfigError(f"unknown config key {key!r}")
    names = {f.name for f in dataclasses.fields(obj)}
    head = path[0]
    if head not in names:
        raise ConfigError(f"unknown config key {key!r}")
    current = getattr(obj, head)
    if len(path) == 1:
        if dataclasses.is_dataclass(current):
            raise ConfigError(f"{key} is a section, not a value")
        hints = typing.get_type_hints(type(obj))
        value = _coerce(text, hints[head], key)
    else:
        value = _set_path(current, path[1:], text, key)
    try:
        return dataclasses.replace(obj, **{head: value})
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{key}: {exc}") from None


def apply_overrides(cfg: RunConfig, items: dict[str, str]) -> RunConfig:
    for key, text in items.items():
        parts = key.split(".")
        if parts[0] not in _NAMESPACES or len(parts) < 2:
            raise ConfigError(f"config keys need a run/agent/env/transfer namespace: {key!r}")
        cfg = _set_path(cfg, list(_NAMESPACES[parts[0]]) + parts[1:], text, key)
    return cfg


def parse_config_text(text: str) -> dict[str, str]:
    items: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {raw.strip()!r}")
        k, v = (p.strip() for p in line.split("=", 1))
        if not k:
            raise ConfigError(f"line {n}: empty key")
        items[k] = v
    return items


def load_config(path=None, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    if path is None:
        return cfg
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return apply_overrides(cfg, parse_config_text(text))


def dump_config(cfg: RunConfig) -> str:
    """Flat key=value rendering of every leaf value (readable back by load_config)."""
    lines = []

    def walk(obj, prefix):
        for f in dataclasses.fields(obj):
            val = getattr(obj, f.name)
            if dataclasses.is_dataclass(val):
                walk(val, f"{prefix}{f.name}.")
            elif isinstance(val, tuple):
                lines.append(f"{prefix}{f.name} = {','.join(str(v) for v in val)}")
            else:
                lines.append(f"{prefix}{f.name} = {val}")

    for f in dataclasses.fields(cfg):
        val = getattr(cfg, f.name)
        if dataclasses.is_dataclass(val):
            walk(val, f"{f.name}.")
        else:
            lines.append(f"run.{f.name} = {val}")
    return "\n".join(lines) + "\n"
