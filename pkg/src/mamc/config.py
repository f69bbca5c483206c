"""Training configuration, its defaults, and the ``key = value`` file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .envs import ENVS

ALGORITHMS = ("mamc", "td3smr")
PRECISIONS = ("float64", "float32")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "mamc"
    env_name: str = "pendulum"
    n_actors: int = 10
    n_critics: int = 10
    batch_size: int = 256
    smr_ratio: int = 10
    gamma: float = 0.99
    tau: float = 5e-3
    q: float = 0.2
    actor_lr: float = 1e-4
    critic_lr: float = 3e-4
    exploration_noise_std: float = 0.1
    target_noise_std: float = 0.1
    noise_clip: float | None = None
    delayed_update: int = 1
    warmup_steps: int = 5000
    total_env_steps: int = 300_000
    eval_interval: int = 1000
    eval_episodes: int = 10
    select_every: int = 1
    master_seed: int = 0
    hidden_widths: tuple[int, ...] = (256, 256)
    buffer_capacity: int = 1_000_000
    precision: str = "float64"

    def validate(self) -> "TrainConfig":
        problems = []
        if self.algorithm not in ALGORITHMS:
            problems.append(f"algorithm must be one of {ALGORITHMS}")
        if self.env_name not in ENVS:
            problems.append(f"env_name must be one of {sorted(ENVS)}")
        for name in ("n_actors", "n_critics", "batch_size", "smr_ratio", "delayed_update",
                     "total_env_steps", "eval_interval", "eval_episodes", "select_every",
                     "buffer_capacity"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be a positive integer")
        if self.warmup_steps < 0:
            problems.append("warmup_steps must be non-negative")
        if self.warmup_steps > self.total_env_steps:
            problems.append("warmup_steps cannot exceed total_env_steps")
        if not 0.0 <= self.q <= 1.0:
            problems.append("q must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            problems.append("gamma must lie in [0, 1)")
        if not 0.0 <= self.tau <= 1.0:
            problems.append("tau must lie in [0, 1]")
        for name in ("actor_lr", "critic_lr"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        for name in ("exploration_noise_std", "target_noise_std"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be non-negative")
        if self.noise_clip is not None and self.noise_clip < 0:
            problems.append("noise_clip must be non-negative")
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            problems.append("hidden_widths must be positive integers")
        if self.precision not in PRECISIONS:
            problems.append(f"precision must be one of {PRECISIONS}")
        if problems:
            raise ConfigError("; ".join(problems))
        return self


# TD3-SMR column of the hyperparameter table; everything else is shared.
TD3SMR_DEFAULTS = dict(n_actors=1, n_critics=2, actor_lr=3e-4, target_noise_std=0.2,
                       noise_clip=0.5, delayed_update=2)

FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}
FIELD_NAMES = tuple(FIELD_TYPES)


def defaults_for(algorithm: str) -> dict:
    base = {f.name: f.default for f in fields(TrainConfig)}
    base["algorithm"] = algorithm
    if algorithm == "td3smr":
        base.update(TD3SMR_DEFAULTS)
    return base


def _parse_int(text: str) -> int:
    text = text.strip().lower().replace("_", "")
    if text.endswith("k"):
        value = float(text[:-1]) * 1000
    else:
        value = float(text)
    if value != int(value):
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def convert(key: str, value) -> object:
    """Turn a raw string (or already typed value) into the field's type."""
    if not isinstance(value, str):
        return tuple(value) if key == "hidden_widths" else value
    text = value.strip()
    kind = FIELD_TYPES[key]
    if key == "hidden_widths":
        return tuple(_parse_int(p) for p in text.replace(" ", "").split(",") if p)
    if key == "noise_clip":
        return None if text.lower() in ("none", "-", "") else float(text)
    if kind == "int":
        return _parse_int(text)
    if kind == "float":
        return float(text)
    return text


def parse_config_text(text: str) -> dict[str, tuple[object, int]]:
    """Parse ``key = value`` lines into ``{key: (value, line_number)}``."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = (convert(key, value), lineno)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return out


def parse_config(text: str = "", overrides: dict | None = None) -> TrainConfig:
    """Build a validated config: defaults < file values < explicit overrides.

    Defaults come from the column of the chosen algorithm.
    """
    file_values = parse_config_text(text)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    for key in overrides:
        if key not in FIELD_TYPES:
            raise ConfigError(f"unknown key {key!r}")
    try:
        overrides = {k: convert(k, v) for k, v in overrides.items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    algorithm = overrides.get("algorithm", file_values.get("algorithm", ("mamc", 0))[0])
    values = defaults_for(algorithm)
    values.update({k: v for k, (v, _) in file_values.items()})
    values.update(overrides)
    cfg = TrainConfig(**values)
    try:
        return cfg.validate()
    except ConfigError as exc:
        # point at the offending file line when there is exactly one culprit
        lines = [f"line {ln} ({k})" for k, (_, ln) in file_values.items()
                 if k not in overrides and k in str(exc)]
        if lines:
            raise ConfigError(f"{exc} [{', '.join(lines)}]") from None
        raise


def to_text(cfg: TrainConfig) -> str:
    """Serialise a config back into the file format."""
    rows = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "hidden_widths":
            v = ",".join(str(w) for w in v)
        elif v is None:
            v = "none"
        rows.append(f"{f.name} = {v}")
    return "\n".join(rows) + "\n"


def replace(cfg: TrainConfig, **changes) -> TrainConfig:
    return dataclasses.replace(cfg, **changes)
