"""Seed-model bank for gray-box adversarial training.

A run keeps a bag of iterations at which its own intermediate state was
saved. A state is saved each time the moving-average training loss has
dropped by at least ``d`` since the last save, for as long as the loss set
point is still at or above ``el``. Every ``t`` iterations the next saved
state (round-robin) becomes the active seed that sources adversaries.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal

logger = logging.getLogger(__name__)

DEFAULT_D = 0.2
DEFAULT_EL = 0.5
MOVING_AVERAGE_WINDOW = 10
# Slack on the drop test so a drop of exactly d survives float rounding.
DROP_TOLERANCE = 1e-12

# Active seed before anything is saved: the randomly initialised network.
INITIAL_SEED = 0

GateMode = Literal["setpoint", "current"]


@dataclass(frozen=True)
class SeedEvent:
    kind: Literal["save", "pick"]
    iteration: int
    seed: int
    loss: float | None = None


@dataclass
class SeedBank:
    d: float = DEFAULT_D
    el: float = DEFAULT_EL
    t: int = 1
    gate: GateMode = "setpoint"
    window_size: int = MOVING_AVERAGE_WINDOW
    adv_bag: list[int] = field(default_factory=list)
    adv_ptr: int = 0
    loss_set_point: float | None = None
    active_seed: int = INITIAL_SEED
    window: deque[float] = field(default_factory=deque)
    events: list[SeedEvent] = field(default_factory=list)
    seen: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        if self.d <= 0 or self.el <= 0 or self.t <= 0:
            raise ValueError(f"D, EL and T must be positive (got {self.d}, {self.el}, {self.t})")
        if self.gate not in ("setpoint", "current"):
            raise ValueError(f"gate must be 'setpoint' or 'current', got {self.gate!r}")
        self.window = deque(self.window, maxlen=self.window_size)


def update_moving_average(bank: SeedBank, loss: float) -> float:
    """Push ``loss`` and return the trailing mean over the last ``window_size``.

    The set point is initialised from this mean once the window first fills.
    """
    if not math.isfinite(loss):
        raise ValueError(f"training loss must be finite, got {loss}")
    bank.window.append(float(loss))
    bank.seen += 1
    value = sum(bank.window) / len(bank.window)
    if bank.loss_set_point is None and bank.seen >= bank.window_size:
        bank.loss_set_point = value
        logger.info("Loss set point initialised to %.4f", value)
    return value


def maybe_save_seed(
    bank: SeedBank,
    iteration: int,
    current: float,
    on_save: Callable[[int], None] | None = None,
) -> bool:
    """Bank ``iteration`` when the loss has dropped by ``d`` and the gate is open."""
    set_point = bank.loss_set_point
    if set_point is None:
        return False
    gated = set_point if bank.gate == "setpoint" else current
    if set_point - current >= bank.d - DROP_TOLERANCE and gated >= bank.el:
        if bank.adv_bag and iteration <= bank.adv_bag[-1]:
            raise ValueError(f"seed iteration {iteration} does not follow {bank.adv_bag[-1]}")
        bank.adv_bag.append(iteration)
        bank.loss_set_point = current
        bank.events.append(SeedEvent("save", iteration, iteration, current))
        if on_save is not None:
            on_save(iteration)
        logger.info("Seed saved at iteration %d (loss %.4f, bag size %d)", iteration, current, len(bank.adv_bag))
        return True
    return False


def pick_seed(bank: SeedBank, iteration: int) -> int:
    """Every ``t`` iterations advance round-robin through the bag."""
    if iteration % bank.t == 0 and bank.adv_bag:
        bank.active_seed = bank.adv_bag[bank.adv_ptr]
        bank.adv_ptr = (bank.adv_ptr + 1) % len(bank.adv_bag)
        bank.events.append(SeedEvent("pick", iteration, bank.active_seed))
        logger.debug("Seed %d active from iteration %d", bank.active_seed, iteration)
    return bank.active_seed
