"""Experiment configuration: a versioned YAML schema with strict keys.

Two kinds exist, ``gmm`` and ``ising``.  Parsing rejects unknown keys at
every level so that a config file is a faithful record of what ran;
``serialize_config(parse_config(path))`` round-trips.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import yaml

from .errors import ConfigError

SCHEMA_VERSION = 1


def _take(data: dict, cls, context: str):
    """Build a dataclass from a dict, rejecting unknown keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {sorted(unknown)}")
    return data


@dataclass(frozen=True)
class GmmConfig:
    """Bimodal Gaussian mixture experiment settings."""

    version: int = SCHEMA_VERSION
    kind: str = "gmm"
    seed: int = 0
    out_dir: Optional[str] = None
    deterministic: bool = False
    dimension: int = 1
    weight_second: float = 0.1
    mode_location: float = 2.5
    sigma2: float = 0.05
    proposal: str = "laplace"
    step_size: Optional[float] = None
    thresholds: tuple = (1.0,)
    c_rej: int = 6
    steps: Optional[int] = 10_000
    seconds: Optional[float] = None
    attempts_per_worker: Optional[int] = None
    replications: int = 20
    max_lag: int = 50
    laplace_gd_step: float = 0.1
    laplace_gd_iters: int = 10_000
    laplace_grad_tol: float = 1e-8

    def __post_init__(self) -> None:
        object.__setattr__(self, "thresholds", tuple(self.thresholds))
        if self.kind != "gmm":
            raise ConfigError(f"kind must be 'gmm', got {self.kind!r}")
        _validate_common(self)
        if self.dimension < 1:
            raise ConfigError("dimension must be >= 1")
        if not 0.0 <= self.weight_second <= 1.0:
            raise ConfigError("weight_second must lie in [0, 1]")
        if not self.sigma2 > 0:
            raise ConfigError("sigma2 must be positive")
        if self.proposal not in ("laplace", "dominant-component"):
            raise ConfigError(f"unknown proposal {self.proposal!r}")


@dataclass(frozen=True)
class TemperatureSpec:
    """One inverse temperature plus the cluster-mean shrinkage used with it."""

    beta: float
    epsilon: float

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in (0, 1)")


@dataclass(frozen=True)
class IsingConfig:
    """Ising experiment grid settings."""

    version: int = SCHEMA_VERSION
    kind: str = "ising"
    seed: int = 0
    out_dir: Optional[str] = None
    deterministic: bool = False
    ks: tuple = (2, 5, 10)
    ns: tuple = (20, 50, 100)
    temperatures: tuple = (
        TemperatureSpec(beta=1.0, epsilon=0.1),
        TemperatureSpec(beta=0.01, epsilon=0.9),
    )
    kernels: tuple = ("metropolis", "wolff")
    j: float = 1.0
    beta_tilde_scale: float = 0.5
    intra: float = 0.8
    inter: float = 0.01
    replications: int = 15
    steps: Optional[int] = 10_000
    seconds: Optional[float] = None
    attempts_per_worker: Optional[int] = None
    c_rej: int = 6
    calibration_steps: int = 2_000
    sw_target_uncoupled: float = 1e-4
    sw_block_length: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "ks", tuple(int(k) for k in self.ks))
        object.__setattr__(self, "ns", tuple(int(n) for n in self.ns))
        object.__setattr__(self, "kernels", tuple(self.kernels))
        temps = tuple(
            t if isinstance(t, TemperatureSpec) else TemperatureSpec(**_take(t, TemperatureSpec, "temperatures"))
            for t in self.temperatures
        )
        object.__setattr__(self, "temperatures", temps)
        if self.kind != "ising":
            raise ConfigError(f"kind must be 'ising', got {self.kind!r}")
        _validate_common(self)
        for kernel in self.kernels:
            if kernel not in ("metropolis", "wolff"):
                raise ConfigError(f"unknown kernel {kernel!r}")
        if not self.ks or not self.ns or not self.temperatures or not self.kernels:
            raise ConfigError("grid axes must be non-empty")
        for k in self.ks:
            for n in self.ns:
                if k > n:
                    raise ConfigError(f"k={k} exceeds N={n}")
        if self.calibration_steps < 1:
            raise ConfigError("calibration_steps must be >= 1")
        if not 0.0 < self.sw_target_uncoupled < 1.0:
            raise ConfigError("sw_target_uncoupled must lie in (0, 1)")


def _validate_common(cfg) -> None:
    if cfg.version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config version {cfg.version}")
    if (cfg.steps is None) == (cfg.seconds is None):
        raise ConfigError("exactly one of steps/seconds must be set")
    if cfg.steps is not None and cfg.steps < 1:
        raise ConfigError("steps must be >= 1")
    if cfg.seconds is not None and not cfg.seconds > 0:
        raise ConfigError("seconds must be > 0")
    if cfg.replications < 1:
        raise ConfigError("replications must be >= 1")
    if cfg.c_rej < 0:
        raise ConfigError("c_rej must be >= 0")
    if cfg.deterministic and cfg.seconds is not None:
        raise ConfigError("deterministic runs cannot use a wall-clock stop")


ExperimentConfig = Union[GmmConfig, IsingConfig]

_KINDS = {"gmm": GmmConfig, "ising": IsingConfig}


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    kind = data.get("kind")
    if kind not in _KINDS:
        raise ConfigError(f"config kind must be one of {sorted(_KINDS)}, got {kind!r}")
    cls = _KINDS[kind]
    return cls(**_take(dict(data), cls, f"{kind} config"))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = dataclasses.asdict(cfg)
    for key, value in list(out.items()):
        if isinstance(value, tuple):
            out[key] = list(value)
    if isinstance(cfg, IsingConfig):
        out["temperatures"] = [dataclasses.asdict(t) for t in cfg.temperatures]
    return out


def parse_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(data)


def serialize_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
