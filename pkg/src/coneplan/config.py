"""Layered run configuration: defaults <- profile <- file <- overrides.

One document mirrors every module's knobs (world recipe, reward,
training hyperparameters, controller, episode settings) so a single
file plus a hash pins an experiment. Unknown keys are rejected loudly;
every field has a default.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # 3.10 fallback
    import tomli as tomllib

from .control import DwaConfig
from .ppo import EpisodeConfig as WorldConfig
from .ppo import TrainHyper
from .rl_env import RewardConfig

DESK_TRAIN_STEPS = 300_000


class ConfigError(Exception):
    """Bad configuration file, key, or value."""


@dataclass(frozen=True)
class EpisodeSettings:
    """Closed-loop episode knobs (runtime world/start/goal live elsewhere)."""

    delta: float = 0.1
    decision_period: float = 0.5
    goal_tolerance: float = 0.2
    timeout: float | None = None
    path_spacing: float = 0.1
    buffer_capacity: int = 20
    buffer_spacing: float = 0.1
    axis_window: int = 5

    def __post_init__(self):
        if self.delta <= 0.0 or self.decision_period <= 0.0:
            raise ValueError("delta and decision_period must be positive")
        ratio = self.decision_period / self.delta
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("decision_period must be an integer multiple of delta")


@dataclass(frozen=True)
class RunConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    hyper: TrainHyper = field(default_factory=TrainHyper)
    controller: DwaConfig = field(default_factory=DwaConfig)
    episode: EpisodeSettings = field(default_factory=EpisodeSettings)
    train_steps: int = DESK_TRAIN_STEPS


_SECTIONS = {
    "world": WorldConfig,
    "reward": RewardConfig,
    "hyper": TrainHyper,
    "controller": DwaConfig,
    "episode": EpisodeSettings,
}

PROFILES: dict[str, dict] = {
    "desk": {},
    "paper": {
        "world": {
            "side": 10.0,
            "n_obstacles": 10,
            "radius_range": [0.3, 0.6],
            "start": [-4.0, -4.0],
            "goal": [4.0, 4.0],
        },
        "train_steps": 20_000_000,
    },
}


def _coerce(value, default, path: str):
    """Bend JSON/TOML scalars to the field's declared shape, or complain."""
    if default is None:
        # only nullable field is a float timeout
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number or null, got {value!r}")
        return float(value)
    if value is None:
        raise ConfigError(f"{path}: value must not be null")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        if float(value) != int(value):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or len(value) != len(default):
            raise ConfigError(
                f"{path}: expected {len(default)} numbers, got {value!r}"
            )
        return tuple(
            _coerce(v, d, f"{path}[{i}]") for i, (v, d) in enumerate(zip(value, default))
        )
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported field type {type(default).__name__}")


def _build_section(dc_type, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a table of keys, got {data!r}")
    defaults = dc_type()
    known = {f.name for f in fields(dc_type)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key {path}.{unknown[0]}")
    kwargs = {
        k: _coerce(v, getattr(defaults, k), f"{path}.{k}") for k, v in data.items()
    }
    try:
        return dc_type(**kwargs)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_file(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as f:
                return tomllib.load(f)
        with open(path) as f:
            return json.load(f)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from None


def _set_dotted(data: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    cur = data
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"override {dotted}: {p} is not a table")
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass
    cur[parts[-1]] = value


def from_dict(data: dict) -> RunConfig:
    """Strict RunConfig from a plain document; unknown keys are errors."""
    known = set(_SECTIONS) | {"train_steps"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]}")
    sections = {
        name: _build_section(dc, data.get(name, {}), name)
        for name, dc in _SECTIONS.items()
    }
    steps = _coerce(data.get("train_steps", DESK_TRAIN_STEPS), 0, "train_steps")
    if steps < 0:
        raise ConfigError("train_steps: must be non-negative")
    return RunConfig(train_steps=steps, **sections)


def load_config(
    path: str | Path | None = None,
    overrides: dict[str, object] | None = None,
    profile: str = "desk",
) -> RunConfig:
    """Layer defaults, a named profile, an optional file, then overrides."""
    if profile not in PROFILES:
        raise ConfigError(
            f"unknown profile {profile!r}; choose from {sorted(PROFILES)}"
        )
    data = dict(PROFILES[profile])
    if path is not None:
        data = _deep_merge(data, _parse_file(Path(path)))
    if overrides:
        data = json.loads(json.dumps(data))  # deep copy before dotted writes
        for dotted, value in overrides.items():
            _set_dotted(data, dotted, value)
    return from_dict(data)


def config_dict(cfg: RunConfig) -> dict:
    """JSON-ready nested document (tuples become lists)."""

    def clean(v):
        if isinstance(v, tuple):
            return [clean(x) for x in v]
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        return v

    return clean(asdict(cfg))


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(config_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
