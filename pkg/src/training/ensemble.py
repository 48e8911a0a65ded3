"""Pre-trained ensemble members for ensemble adversarial training."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import ConfigError, TrainConfig, TrainMethod
from .schedules import train_normal

logger = logging.getLogger(__name__)

# Each member's seeds are offset so no two members share an initialisation.
MEMBER_SEED_STRIDE = 1000


@dataclass(frozen=True)
class EatSetup:
    trained: str
    members: tuple[str, ...]
    held_out: str


# MNIST setups: the trained net, its pre-trained static members, the held-out net.
EAT_SETUPS: dict[str, EatSetup] = {
    "netA": EatSetup("netA", ("netB", "netC"), "netD"),
    "netB": EatSetup("netB", ("netC", "netD"), "netA"),
    "netC": EatSetup("netC", ("netD", "netA"), "netB"),
    "netD": EatSetup("netD", ("netA", "netB"), "netC"),
}


def member_configs(base: TrainConfig, target: str) -> list[TrainConfig]:
    """Normal-training configs for the static members of ``target``'s setup.

    The trained net itself is pre-trained too and joins the ensemble as a
    static copy, so every setup lists three pre-trained members.
    """
    try:
        setup = EAT_SETUPS[target]
    except KeyError:
        raise ConfigError("network", f"no EAT setup for {target!r}; expected one of {sorted(EAT_SETUPS)}") from None
    configs = []
    for position, network in enumerate((setup.trained, *setup.members), start=1):
        offset = MEMBER_SEED_STRIDE * position
        values = base.model_dump(exclude={"k", "p", "ensemble", "run_id"})
        values.update(
            method=TrainMethod.NORMAL,
            network=network,
            init_seed=base.init_seed + offset,
            shuffle_seed=base.shuffle_seed + offset,
            run_id=f"pretrain-{target}-{network}",
        )
        configs.append(TrainConfig.model_validate(values))
    return configs


def _pretrain_member(cfg: TrainConfig) -> Path:
    return train_normal(cfg).best_checkpoint


def pretrain_ensemble(base: TrainConfig, target: str, *, workers: int | None = None) -> list[Path]:
    """Train every member of ``target``'s setup, each in its own process.

    Returns best-checkpoint paths in setup order, ready for ``ensemble``.
    """
    configs = member_configs(base, target)
    logger.info("Pre-training %d ensemble members for %s", len(configs), target)
    with ProcessPoolExecutor(max_workers=workers or len(configs)) as pool:
        paths = list(pool.map(_pretrain_member, configs))
    for cfg, path in zip(configs, paths):
        logger.info("Member %s ready: %s", cfg.run_id, path)
    return paths
