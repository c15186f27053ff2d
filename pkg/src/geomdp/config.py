"""Experiment configuration: TOML in, validated dataclasses out, JSON echo.

Unknown keys are rejected so silent typos cannot skew an experiment; the
fully resolved configuration (defaults included) is echoed verbatim next to
every run's outputs.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .planner import MppiConfig
from .tdmpc import TrainConfig


class ConfigError(ValueError):
    """Raised for unreadable files, unknown keys, or bad values."""


KNOWN_ENV_KEYS = {
    "name",
    "group",
    "reward_mode",
    "episode_len",
    "dt",
    "damping",
    "action_limit",
    "target_radius",
    "action_penalty",
    "gravity_enabled",
    "init_radius",
    "frame",
}

TOP_LEVEL_KEYS = {"seed", "env", "train", "planner", "lqr", "steerable"}
LQR_KEYS = {"horizon", "samples", "fd_step", "r_scale"}
STEERABLE_KEYS = {"samples"}


def _check_keys(section: str, given: dict, allowed: set[str]) -> None:
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}"
        )


def _dataclass_from(section: str, cls, given: dict):
    allowed = {f.name for f in dataclasses.fields(cls)}
    _check_keys(section, given, allowed)
    try:
        return cls(**given)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [{section}] section: {exc}") from exc


@dataclasses.dataclass
class ExperimentConfig:
    seed: int = 0
    env: dict = dataclasses.field(default_factory=dict)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    lqr: dict = dataclasses.field(default_factory=lambda: {"horizon": 20, "samples": 50})
    steerable: dict = dataclasses.field(default_factory=lambda: {"samples": 200})

    @property
    def env_name(self) -> str:
        return self.env.get("name", "pointmass2d")

    @property
    def group_name(self) -> str | None:
        return self.env.get("group")

    def env_overrides(self) -> dict:
        return {k: v for k, v in self.env.items() if k not in ("name", "group")}

    def resolved(self) -> dict:
        out = {
            "seed": self.seed,
            "env": dict(self.env),
            "train": self.train.to_dict(),
            "lqr": dict(self.lqr),
            "steerable": dict(self.steerable),
        }
        return out

    def write_resolved(self, out_dir: str | Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "config.resolved.json"
        path.write_text(json.dumps(self.resolved(), indent=2, sort_keys=True) + "\n")
        return path


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Parse and validate a TOML experiment file (None gives pure defaults)."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    _check_keys("<top level>", raw, TOP_LEVEL_KEYS)
    env = raw.get("env", {})
    _check_keys("env", env, KNOWN_ENV_KEYS)
    if "init_radius" in env:
        env["init_radius"] = tuple(env["init_radius"])
    train_section = dict(raw.get("train", {}))
    planner_section = raw.get("planner", train_section.pop("planner", {}))
    planner = _dataclass_from("planner", MppiConfig, planner_section)
    train_section["planner"] = planner
    if "seeds" in train_section:
        train_section["seeds"] = list(train_section["seeds"])
    train = _dataclass_from("train", TrainConfig, train_section)
    lqr = dict(ExperimentConfig().lqr)
    _check_keys("lqr", raw.get("lqr", {}), LQR_KEYS)
    lqr.update(raw.get("lqr", {}))
    steer = dict(ExperimentConfig().steerable)
    _check_keys("steerable", raw.get("steerable", {}), STEERABLE_KEYS)
    steer.update(raw.get("steerable", {}))
    return ExperimentConfig(
        seed=int(raw.get("seed", 0)), env=env, train=train, lqr=lqr, steerable=steer
    )
