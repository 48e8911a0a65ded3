"""MNIST loading and batching."""

from .batching import DEFAULT_BATCH_SIZE, Batch, BatchPlan, batches_per_epoch, epoch_permutation, minibatches
from .idx_reader import (
    MNIST_FILES,
    Dataset,
    IdxFormatError,
    dataset_checksum,
    find_mnist_files,
    load_idx,
    load_mnist,
    split_validation,
)

__all__ = [
    "DEFAULT_BATCH_SIZE",
    "MNIST_FILES",
    "Batch",
    "BatchPlan",
    "Dataset",
    "IdxFormatError",
    "batches_per_epoch",
    "dataset_checksum",
    "epoch_permutation",
    "find_mnist_files",
    "load_idx",
    "load_mnist",
    "minibatches",
    "split_validation",
]
