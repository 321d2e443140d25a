"""Run configuration: one TOML file covering every tunable default.

Sections mirror the modules: ``[geometry]``, ``[plant]`` (with
``[plant.hysteresis]``), ``[sensor]``, ``[collect]``, ``[train]``,
``[controller.*]`` and ``[benchmark]``, plus a top-level ``seed``. Unknown
keys are rejected so typos fail loudly.
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .controllers import CommandLimits, MpcConfig
from .datagen import Workspace
from .digest import config_hash, to_plain
from .kinematics import SegmentGeometry
from .nn.train import TrainConfig
from .plant import HysteresisParams, PlantConfig, SensorSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONTROLLERS = ("jacobian", "mpc", "fnn", "lstm", "gru")
LEARNED = ("fnn", "lstm", "gru")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PlantSection:
    hysteresis: HysteresisParams = HysteresisParams()
    tendon_gain: float = 1e-3
    rotation_gain: float = 1e-4
    translation_gain: float = 1e-3
    count_limit: float = 50_000.0
    disk_radius: float = 2.5
    theta_max: float = PlantConfig.theta_max
    load_g: float = 0.0
    substeps: int = 8
    pretension_cycles: int = 2


@dataclass(frozen=True)
class CollectSection:
    duration: float = 408.0
    rate: float = 5.0
    knot_interval: tuple = (2.0, 10.0)
    theta_knot: float = 1.2
    margin: float = 2.0
    ratios: tuple = (7.0, 2.0, 1.0)
    workspace: Workspace = Workspace()


@dataclass(frozen=True)
class TrainSection:
    arch: str = "gru"
    layers: int = 2
    hidden: int = 32
    seq_len: int = 5
    target: str = "absolute"
    fnn_layers: int = 2
    fnn_hidden: int = 64
    optimizer: TrainConfig = TrainConfig(max_epochs=200)
    grid: tuple = (("gru", 3, 64), ("gru", 4, 128), ("gru", 5, 256),
                   ("lstm", 3, 64), ("lstm", 4, 128), ("lstm", 5, 256))


@dataclass(frozen=True)
class JacobianSection:
    damping: float = 0.01
    max_condition: float = 1e8


@dataclass(frozen=True)
class FnnSection:
    window: int = 5
    channels: tuple = (0, 1, 2, 3, 4, 5)


@dataclass(frozen=True)
class RnnSection:
    past_poses: str = "measured"


@dataclass(frozen=True)
class ControllerSection:
    limits: CommandLimits = CommandLimits()
    jacobian: JacobianSection = JacobianSection()
    mpc: MpcConfig = MpcConfig()
    fnn: FnnSection = FnnSection()
    rnn: RnnSection = RnnSection()


@dataclass(frozen=True)
class BenchmarkSection:
    task: str = "all"
    controllers: tuple = CONTROLLERS
    trials: int = 5
    jitter: bool = True
    latency_trials: int = 200
    error_source: str = "actual"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    geometry: SegmentGeometry = SegmentGeometry()
    plant: PlantSection = PlantSection()
    sensor: SensorSpec = SensorSpec()
    collect: CollectSection = CollectSection()
    train: TrainSection = TrainSection()
    controller: ControllerSection = ControllerSection()
    benchmark: BenchmarkSection = BenchmarkSection()

    def plant_config(self) -> PlantConfig:
        p = self.plant
        return PlantConfig(geometry=self.geometry, hysteresis=p.hysteresis, sensor=self.sensor,
                           tendon_gain=p.tendon_gain, rotation_gain=p.rotation_gain,
                           translation_gain=p.translation_gain, count_limit=p.count_limit,
                           disk_radius=p.disk_radius, theta_max=p.theta_max, load_g=p.load_g,
                           substeps=p.substeps, pretension_cycles=p.pretension_cycles)

    def hash(self) -> str:
        return config_hash(self)

    def to_dict(self) -> dict:
        return to_plain(self)


def _coerce(default, value, where: str):
    if dataclasses.is_dataclass(default):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a table")
        return merge(default, value, where)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{where}: expected an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected an array")
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return value


def merge(base, overrides: dict, where: str = ""):
    """Copy of dataclass ``base`` with ``overrides`` applied; unknown keys raise."""
    names = {f.name for f in dataclasses.fields(base)}
    changes = {}
    for key, value in overrides.items():
        path = f"{where}.{key}" if where else key
        if key not in names:
            raise ConfigError(f"unknown config key '{path}'")
        changes[key] = _coerce(getattr(base, key), value, path)
    try:
        return replace(base, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.train.arch not in LEARNED:
        raise ConfigError(f"train.arch must be one of {LEARNED}")
    if cfg.train.target not in ("absolute", "increment"):
        raise ConfigError("train.target must be 'absolute' or 'increment'")
    if cfg.benchmark.task not in ("a", "b", "all"):
        raise ConfigError("benchmark.task must be a, b or all")
    bad = [c for c in cfg.benchmark.controllers if c not in CONTROLLERS]
    if bad:
        raise ConfigError(f"unknown controllers {bad}")
    if cfg.benchmark.error_source not in ("actual", "measured"):
        raise ConfigError("benchmark.error_source must be 'actual' or 'measured'")
    if cfg.controller.rnn.past_poses not in ("measured", "desired"):
        raise ConfigError("controller.rnn.past_poses must be 'measured' or 'desired'")
    return cfg


def parse_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return validate(merge(RunConfig(), data))


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config(Path(path).read_text())
