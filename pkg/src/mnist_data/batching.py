"""Deterministic shuffled minibatches."""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .idx_reader import Dataset

DEFAULT_BATCH_SIZE = 128

Batch = tuple[npt.NDArray[np.float32], npt.NDArray[np.int64]]


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    drop_last: bool = True

    def __post_init__(self) -> None:
        if self.batch_size <= 0:
            raise ValueError(f"batch size must be positive, got {self.batch_size}")


def epoch_permutation(size: int, seed: int, epoch: int) -> npt.NDArray[np.int64]:
    """Fisher-Yates permutation keyed by a hash of ``(seed, epoch)``.

    ``SeedSequence`` mixes the pair into the generator state, so the result
    depends on nothing but the two integers.
    """
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, epoch])))
    return rng.permutation(size)


def batches_per_epoch(size: int, plan: BatchPlan) -> int:
    full, remainder = divmod(size, plan.batch_size)
    return full if plan.drop_last or remainder == 0 else full + 1


def minibatches(dataset: Dataset, plan: BatchPlan, epoch: int) -> Iterator[Batch]:
    """Yield ``(images, labels)`` batches covering one shuffled epoch."""
    if plan.batch_size > len(dataset):
        raise ValueError(f"batch size {plan.batch_size} exceeds dataset size {len(dataset)}")
    order = epoch_permutation(len(dataset), plan.seed, epoch)
    return _iterate(dataset, order, plan.batch_size, batches_per_epoch(len(dataset), plan))


def _iterate(dataset: Dataset, order: npt.NDArray[np.int64], size: int, count: int) -> Iterator[Batch]:
    for number in range(count):
        indices = order[number * size : (number + 1) * size]
        yield dataset.images[indices], dataset.labels[indices]
