"""Training regimes over the engine, data, attack and checkpoint packages."""

from .config import ConfigError, TrainConfig, TrainMethod, build_config, load_config, read_config_file
from .ensemble import EAT_SETUPS, EatSetup, member_configs, pretrain_ensemble
from .schedules import (
    EnsembleMember,
    EpochStats,
    RunRecord,
    Trainer,
    eat_source_index,
    load_ensemble,
    resolve_t,
    train,
    train_adversarial,
    train_eat,
    train_gat,
    train_normal,
)

__all__ = [
    "EAT_SETUPS",
    "ConfigError",
    "EatSetup",
    "EnsembleMember",
    "EpochStats",
    "RunRecord",
    "TrainConfig",
    "TrainMethod",
    "Trainer",
    "build_config",
    "eat_source_index",
    "load_config",
    "load_ensemble",
    "member_configs",
    "pretrain_ensemble",
    "read_config_file",
    "resolve_t",
    "train",
    "train_adversarial",
    "train_eat",
    "train_gat",
    "train_normal",
]
