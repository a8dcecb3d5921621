"""Run configuration: documented key-value file plus flag overrides.

File format: one ``section.key = value`` per line, ``#`` comments, blank
lines ignored.  Sections map to the component configs (env, ppo, train, fm,
rewards, run); values are coerced to the type of the field's default.
Precedence is defaults < file < command-line flags; the effective config is
printed at startup for reproducibility.

Example:

    run.seed = 7
    run.workers = 4
    env.gait_freq = 1.5
    ppo.lr = 1e-3
    train.n_envs = 128
    rewards.w_track_lin = 2.0
    fm.context = 20
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

from .env import EnvConfig
from .fm import FmConfig
from .ppo import PpoConfig
from .rewards import RewardParams
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunPaths:
    out_dir: str = "runs"
    checkpoints: str = ""      # defaults under out_dir
    dataset: str = ""
    reports: str = ""

    def resolve(self) -> None:
        self.checkpoints = self.checkpoints or os.path.join(self.out_dir, "checkpoints")
        self.dataset = self.dataset or os.path.join(self.out_dir, "dataset")
        self.reports = self.reports or os.path.join(self.out_dir, "reports")


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 0            # 0 = available parallelism
    out_dir: str = "runs"

    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)


@dataclass
class FullConfig:
    run: RunConfig = field(default_factory=RunConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    fm: FmConfig = field(default_factory=FmConfig)
    rewards: RewardParams = field(default_factory=RewardParams)

    def section(self, name: str):
        if not hasattr(self, name):
            raise ConfigError(f"unknown config section {name!r}")
        return getattr(self, name)


def _coerce(raw: str, default):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad boolean {raw!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        parts = [p for p in raw.replace(",", " ").split() if p]
        kind = type(default[0]) if default else float
        return tuple(kind(p) for p in parts)
    if isinstance(default, str):
        return raw
    raise ConfigError(f"unsupported config value type {type(default).__name__}")


def apply_assignment(cfg: FullConfig, dotted: str, raw: str) -> None:
    if "." not in dotted:
        raise ConfigError(f"expected section.key, got {dotted!r}")
    section_name, key = dotted.split(".", 1)
    section = cfg.section(section_name)
    if not hasattr(section, key):
        raise ConfigError(f"unknown key {key!r} in section {section_name!r}")
    default = getattr(section, key)
    setattr(section, key, _coerce(raw, default))


def load_config_file(cfg: FullConfig, path: str) -> None:
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        dotted, raw = (part.strip() for part in text.split("=", 1))
        try:
            apply_assignment(cfg, dotted, raw)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc


def build_config(config_path: str | None, overrides: list) -> FullConfig:
    cfg = FullConfig()
    if config_path:
        load_config_file(cfg, config_path)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must be section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        apply_assignment(cfg, dotted.strip(), raw.strip())
    return cfg


def format_effective(cfg: FullConfig) -> str:
    lines = []
    for section_name in ("run", "env", "ppo", "train", "fm", "rewards"):
        section = getattr(cfg, section_name)
        for f in dataclasses.fields(section):
            lines.append(f"{section_name}.{f.name} = {getattr(section, f.name)}")
    return "\n".join(lines)
