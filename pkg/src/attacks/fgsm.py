"""Single-step gradient-sign attacks: FGSM, FGSM-LL and FGSM-Rand."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
import numpy.typing as npt

from src.nn_engine import NetworkSpec, Parameters, Tensor, forward, loss_and_grads
from src.nn_engine.errors import ShapeMismatchError

PIXEL_MIN = 0.0
PIXEL_MAX = 1.0


class AttackError(ValueError):
    """Invalid attack parameters."""


class AttackMethod(str, Enum):
    FGSM = "fgsm"
    FGSM_LL = "fgsm-ll"
    FGSM_RAND = "fgsm-rand"

    @classmethod
    def parse(cls, value: str | AttackMethod) -> AttackMethod:
        if isinstance(value, AttackMethod):
            return value
        key = value.strip().lower().replace("_", "-")
        aliases = {"fgsmll": "fgsm-ll", "fgsmrand": "fgsm-rand"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise AttackError(f"unknown attack {value!r}; expected one of {[m.value for m in cls]}") from None

    @property
    def tag(self) -> str:
        """Compact form used in training method tags, e.g. ``fgsmll``."""
        return self.value.replace("-", "")


@dataclass(frozen=True)
class AttackSpec:
    method: AttackMethod = AttackMethod.FGSM
    epsilon: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise AttackError(f"epsilon must be a finite value >= 0, got {self.epsilon}")

    def derive(self, *stream: int) -> AttackSpec:
        """Same attack with a seed hashed from ``(seed, *stream)``."""
        state = np.random.SeedSequence([self.seed, *stream]).generate_state(1, dtype=np.uint64)[0]
        return replace(self, seed=int(state))


def target_labels(
    spec: NetworkSpec,
    params: Parameters,
    x: Tensor,
    y_true: npt.ArrayLike,
    attack: AttackSpec,
) -> tuple[npt.NDArray[np.int64], float]:
    """Labels whose loss gradient drives the attack, and the step direction.

    FGSM ascends the loss of the true label; FGSM-LL and FGSM-Rand descend
    toward the least-likely predicted class or a uniformly drawn wrong one.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    if attack.method is AttackMethod.FGSM:
        return y_true, 1.0
    if attack.method is AttackMethod.FGSM_LL:
        logits, _ = forward(spec, params, x, "eval")
        return logits.argmin(axis=1).astype(np.int64), -1.0
    rng = np.random.default_rng(attack.seed)
    draw = rng.integers(0, spec.classes - 1, size=len(y_true))
    return draw + (draw >= y_true), -1.0


def attack_direction(
    spec: NetworkSpec,
    params: Parameters,
    x: Tensor,
    y_true: npt.ArrayLike,
    attack: AttackSpec,
) -> Tensor:
    """Signed unit step in ``{-1, 0, +1}`` per coordinate; ``sign(0) = 0``."""
    labels, direction = target_labels(spec, params, x, y_true, attack)
    _, _, input_grads = loss_and_grads(spec, params, x, labels, "eval")
    return (direction * np.sign(input_grads)).astype(x.dtype)


def apply_perturbation(x: Tensor, direction: Tensor, epsilon: float) -> Tensor:
    return np.clip(x + x.dtype.type(epsilon) * direction, PIXEL_MIN, PIXEL_MAX).astype(x.dtype, copy=False)


def _validate(spec: NetworkSpec, x: Tensor, y_true: npt.ArrayLike) -> None:
    if tuple(x.shape[1:]) != tuple(spec.input_shape):
        raise ShapeMismatchError(f"{spec.name}: attack input shape {x.shape} does not match {spec.input_shape}")
    if len(np.asarray(y_true)) != len(x):
        raise ShapeMismatchError(f"{len(x)} images but {len(np.asarray(y_true))} labels")
    if x.size and (x.min() < PIXEL_MIN or x.max() > PIXEL_MAX):
        raise AttackError("attack inputs must lie in [0, 1]")


def generate(
    spec: NetworkSpec,
    params: Parameters,
    x: Tensor,
    y_true: npt.ArrayLike,
    attack: AttackSpec,
) -> Tensor:
    """Adversarial counterpart of ``x``, clipped to the pixel range.

    Gradients are taken in eval mode; neither ``params`` nor ``x`` is modified.
    """
    _validate(spec, x, y_true)
    if attack.epsilon == 0:
        return x.copy()
    return apply_perturbation(x, attack_direction(spec, params, x, y_true, attack), attack.epsilon)


def generate_batch_split(
    spec: NetworkSpec,
    params_current: Parameters,
    params_seed: Parameters,
    batch: Tensor,
    labels: npt.ArrayLike,
    k: int,
    p: int,
    attack: AttackSpec,
    *,
    seed_spec: NetworkSpec | None = None,
) -> Tensor:
    """Rows ``[0, k)`` attacked by the current state, ``[k, k+p)`` by the seed
    state, the remaining ``m-k-p`` left clean. Labels are not touched."""
    m = len(batch)
    if k < 0 or p < 0 or k + p > m:
        raise AttackError(f"k={k} and p={p} do not fit a minibatch of {m}")
    labels = np.asarray(labels)
    mixed = batch.copy()
    if k:
        mixed[:k] = generate(spec, params_current, batch[:k], labels[:k], attack)
    if p:
        mixed[k : k + p] = generate(seed_spec or spec, params_seed, batch[k : k + p], labels[k : k + p], attack.derive(1))
    return mixed
