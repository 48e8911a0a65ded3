"""Validated training configuration.

A config file is flat TOML using the ``TrainConfig`` field names; command
line flags override file values. ``GAB_DATA_DIR`` and ``GAB_RUNS_DIR`` are
read from the environment (or a ``.env`` file) when the fields are unset.
"""

from __future__ import annotations

import hashlib
import os
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.attacks import AttackMethod
from src.checkpoint_bank import MethodTag
from src.nn_engine import BUILTIN_SPECS
from src.nn_engine.optimizer import DEFAULT_LR, DEFAULT_LR_SCHEDULE, DEFAULT_MOMENTUM

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_DATA_DIR = "data"
DEFAULT_RUNS_DIR = "runs"


class ConfigError(ValueError):
    """A config value is invalid; ``field`` names it."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class TrainMethod(str, Enum):
    NORMAL = "normal"
    AT = "at"
    EAT = "eat"
    GAT = "gat"


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    method: TrainMethod = TrainMethod.NORMAL
    network: str = "lenet"
    epochs: int = Field(25, ge=0)
    batch_size: int = Field(128, gt=0)
    k: int | None = Field(None, ge=0)
    p: int | None = Field(None, ge=0)
    attack: AttackMethod = AttackMethod.FGSM
    epsilon_train: float = Field(0.3, ge=0.0)

    d: float = Field(0.2, gt=0.0)
    el: float = Field(0.5, gt=0.0)
    t_iterations: int | None = Field(None, gt=0)
    t_epoch_fraction: float = Field(0.25, gt=0.0)
    el_gate: Literal["setpoint", "current"] = "setpoint"

    ensemble: list[Path] = Field(default_factory=list)

    init_seed: int = 0
    shuffle_seed: int = 0
    attack_seed: int = 0

    lr: float = Field(DEFAULT_LR, gt=0.0)
    momentum: float = Field(DEFAULT_MOMENTUM, ge=0.0, lt=1.0)
    lr_schedule: list[tuple[int, float]] = Field(default_factory=lambda: list(DEFAULT_LR_SCHEDULE))

    run_id: str | None = None
    runs_dir: Path | None = None
    data_dir: Path | None = None
    validation_size: int = Field(5000, ge=0)
    best_selection: Literal["validation", "final"] = "validation"
    fine_grained: bool = False
    fine_grained_interval: int = Field(5, gt=0)
    fine_grained_epochs: int | None = Field(None, gt=0)
    max_iterations: int | None = Field(None, ge=0)
    log_every: int = Field(50, gt=0)

    @field_validator("network")
    @classmethod
    def _known_network(cls, value: str) -> str:
        if value not in BUILTIN_SPECS:
            raise ValueError(f"unknown network {value!r}; expected one of {sorted(BUILTIN_SPECS)}")
        return value

    @field_validator("attack", mode="before")
    @classmethod
    def _parse_attack(cls, value: Any) -> Any:
        return AttackMethod.parse(value) if isinstance(value, str) else value

    @field_validator("lr_schedule")
    @classmethod
    def _non_increasing(cls, value: list[tuple[int, float]]) -> list[tuple[int, float]]:
        for epoch, multiplier in value:
            if epoch < 0 or not 0.0 < multiplier <= 1.0:
                raise ValueError(f"schedule step ({epoch}, {multiplier}) would not keep the rate non-increasing")
        return sorted(value)

    @model_validator(mode="after")
    def _split_and_invariants(self) -> TrainConfig:
        m = self.batch_size
        defaults = {
            TrainMethod.NORMAL: (0, 0),
            TrainMethod.AT: (m // 2, 0),
            TrainMethod.EAT: (m // 2, 0),
            TrainMethod.GAT: (m // 4, m // 4),
        }[self.method]
        k = defaults[0] if self.k is None else self.k
        p = defaults[1] if self.p is None else self.p
        if self.method is TrainMethod.NORMAL and k:
            raise ConfigError("k", "must be 0 for normal training")
        if p and self.method is not TrainMethod.GAT:
            raise ConfigError("p", "must be 0 unless method is gat")
        if k + p > m:
            raise ConfigError("k", f"k + p = {k + p} exceeds batch size {m}")
        if (self.method is TrainMethod.EAT) != bool(self.ensemble):
            raise ConfigError("ensemble", "must be non-empty exactly when method is eat")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "p", p)
        if self.run_id is None:
            object.__setattr__(self, "run_id", f"{self.method_tag.value}-{self.network}-s{self.init_seed}")
        return self

    @property
    def method_tag(self) -> MethodTag:
        if self.method is TrainMethod.AT:
            return MethodTag(f"at-{self.attack.tag}")
        return MethodTag(self.method.value)

    def resolved_data_dir(self) -> Path:
        return self.data_dir or Path(os.getenv("GAB_DATA_DIR", DEFAULT_DATA_DIR))

    def resolved_runs_dir(self) -> Path:
        return self.runs_dir or Path(os.getenv("GAB_RUNS_DIR", DEFAULT_RUNS_DIR))

    def seeds(self) -> dict[str, int]:
        return {"init": self.init_seed, "shuffle": self.shuffle_seed, "attack": self.attack_seed}

    def config_hash(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode()).hexdigest()[:16]


def build_config(values: dict[str, Any]) -> TrainConfig:
    """Validate ``values``; the first failing field is reported as ``ConfigError``."""
    try:
        return TrainConfig.model_validate(values)
    except ValidationError as exc:
        error = exc.errors()[0]
        cause = error.get("ctx", {}).get("error")
        if isinstance(cause, ConfigError):
            raise cause from exc
        field = ".".join(str(part) for part in error["loc"]) or "config"
        raise ConfigError(field, error["msg"]) from exc


def read_config_file(path: str | os.PathLike[str]) -> dict[str, Any]:
    path = Path(path)
    try:
        with path.open("rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigError("config", f"config file {path} does not exist") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid TOML: {exc}") from exc


def load_config(path: str | os.PathLike[str] | None = None, overrides: dict[str, Any] | None = None) -> TrainConfig:
    values = read_config_file(path) if path else {}
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})
    return build_config(values)
