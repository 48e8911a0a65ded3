"""SGD with classical (heavy-ball) momentum and a step learning-rate policy."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from .errors import NonFiniteGradientError, ShapeMismatchError
from .network import LayerParams, Parameters

DEFAULT_LR = 0.01
DEFAULT_MOMENTUM = 0.9
DEFAULT_LR_SCHEDULE: tuple[tuple[int, float], ...] = ((15, 0.1), (20, 0.1))


@dataclass(frozen=True)
class OptimizerState:
    velocity: Parameters
    lr: float = DEFAULT_LR
    momentum: float = DEFAULT_MOMENTUM
    schedule: tuple[tuple[int, float], ...] = DEFAULT_LR_SCHEDULE

    @classmethod
    def create(
        cls,
        params: Parameters,
        *,
        lr: float = DEFAULT_LR,
        momentum: float = DEFAULT_MOMENTUM,
        schedule: Sequence[tuple[int, float]] = DEFAULT_LR_SCHEDULE,
    ) -> OptimizerState:
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
        ordered = tuple(sorted((int(epoch), float(mult)) for epoch, mult in schedule))
        for epoch, mult in ordered:
            # multipliers above 1 would make the effective rate increase
            if epoch < 0 or not 0.0 < mult <= 1.0:
                raise ValueError(f"invalid schedule step ({epoch}, {mult})")
        return cls(params.zeros_like(), float(lr), float(momentum), ordered)


def current_lr(state: OptimizerState, epoch: int) -> float:
    """Base rate times every multiplier whose boundary is at or before ``epoch``."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    lr = state.lr
    for boundary, multiplier in state.schedule:
        if boundary <= epoch:
            lr *= multiplier
    return lr


def sgd_momentum_step(
    params: Parameters,
    grads: Parameters,
    state: OptimizerState,
    *,
    lr: float | None = None,
) -> tuple[Parameters, OptimizerState]:
    """``v <- mu*v + g``; ``theta <- theta - lr*v``.

    ``lr`` defaults to the state's base rate; training loops pass
    ``current_lr(state, epoch)``.
    """
    step = state.lr if lr is None else lr
    mu = state.momentum
    new_params = Parameters()
    new_velocity = Parameters()
    for index, layer in params.items():
        if index not in grads.layers:
            raise ShapeMismatchError(f"missing gradient for layer {index}")
        grad = grads[index]
        velocity = state.velocity[index]
        for name in ("weight", "bias"):
            g = getattr(grad, name)
            if g.shape != getattr(layer, name).shape:
                raise ShapeMismatchError(f"layer {index} {name}: gradient shape {g.shape} != {getattr(layer, name).shape}")
            if not np.isfinite(g).all():
                raise NonFiniteGradientError(f"layer {index} {name} gradient")
        v_weight = mu * velocity.weight + grad.weight
        v_bias = mu * velocity.bias + grad.bias
        new_velocity.layers[index] = LayerParams(v_weight, v_bias)
        new_params.layers[index] = LayerParams(layer.weight - step * v_weight, layer.bias - step * v_bias)
    return new_params, replace(state, velocity=new_velocity)
