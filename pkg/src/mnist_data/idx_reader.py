"""IDX (MNIST) file parsing into normalized datasets."""

from __future__ import annotations

import gzip
import hashlib
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

logger = logging.getLogger(__name__)

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
MNIST_CLASSES = 10

# Canonical names, as published; a ".gz" variant is accepted for each.
MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class IdxFormatError(ValueError):
    """An IDX file is malformed; names the file and the offending field."""

    def __init__(self, path: str | os.PathLike[str], field: str, message: str) -> None:
        super().__init__(f"{path}: {field}: {message}")
        self.path = str(path)
        self.field = field


@dataclass(frozen=True)
class Dataset:
    """Images of shape ``(N, 1, 28, 28)`` in ``[0, 1]`` with labels in ``[0, 10)``."""

    images: npt.NDArray[np.float32]
    labels: npt.NDArray[np.int64]
    split: str

    def __post_init__(self) -> None:
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        self.images.flags.writeable = False
        self.labels.flags.writeable = False

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices: npt.ArrayLike, split: str | None = None) -> Dataset:
        return Dataset(self.images[indices].copy(), self.labels[indices].copy(), split or self.split)


def _read_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise IdxFormatError(path, "gzip", f"cannot decompress: {exc}") from exc
    return raw


def _header(path: Path, data: bytes, fields: int) -> tuple[int, ...]:
    size = 4 * fields
    if len(data) < size:
        raise IdxFormatError(path, "header", f"need {size} header bytes, file has {len(data)}")
    return struct.unpack(f">{fields}I", data[:size])


def read_idx_images(path: str | os.PathLike[str]) -> npt.NDArray[np.float32]:
    path = Path(path)
    data = _read_bytes(path)
    magic, count, rows, cols = _header(path, data, 4)
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(path, "magic", f"expected {IMAGE_MAGIC}, found {magic}")
    expected = count * rows * cols
    if len(data) - 16 < expected:
        raise IdxFormatError(path, "pixels", f"truncated: {count} images need {expected} bytes, found {len(data) - 16}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=expected, offset=16)
    return (pixels.astype(np.float32) / np.float32(255.0)).reshape(count, 1, rows, cols)


def read_idx_labels(path: str | os.PathLike[str]) -> npt.NDArray[np.int64]:
    path = Path(path)
    data = _read_bytes(path)
    magic, count = _header(path, data, 2)
    if magic != LABEL_MAGIC:
        raise IdxFormatError(path, "magic", f"expected {LABEL_MAGIC}, found {magic}")
    if len(data) - 8 < count:
        raise IdxFormatError(path, "labels", f"truncated: {count} labels declared, found {len(data) - 8}")
    labels = np.frombuffer(data, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    if labels.size and labels.max() >= MNIST_CLASSES:
        raise IdxFormatError(path, "labels", f"label {labels.max()} outside [0, {MNIST_CLASSES})")
    return labels


def load_idx(
    images_path: str | os.PathLike[str],
    labels_path: str | os.PathLike[str],
    *,
    split: str | None = None,
) -> Dataset:
    """Load an image/label IDX pair; pixel bytes are divided by 255."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IdxFormatError(
            labels_path, "count", f"{len(labels)} labels but {images_path} holds {len(images)} images"
        )
    if split is None:
        split = "test" if Path(images_path).name.startswith("t10k") else "train"
    logger.info("Loaded %d %s images from %s", len(images), split, images_path)
    return Dataset(images, labels, split)


def find_mnist_files(data_dir: str | os.PathLike[str]) -> dict[str, Path]:
    """Resolve the four canonical MNIST files, raw or gzip-compressed."""
    data_dir = Path(data_dir)
    found: dict[str, Path] = {}
    missing: list[str] = []
    for key, name in MNIST_FILES.items():
        for candidate in (data_dir / name, data_dir / f"{name}.gz"):
            if candidate.is_file():
                found[key] = candidate
                break
        else:
            missing.append(name)
    if missing:
        raise FileNotFoundError(
            f"MNIST files missing from {data_dir}: {', '.join(missing)}. "
            "Run `python -m src.lab_cli fetch-data --data-dir DIR` or set GAB_DATA_DIR."
        )
    return found


def load_mnist(data_dir: str | os.PathLike[str]) -> tuple[Dataset, Dataset]:
    files = find_mnist_files(data_dir)
    train = load_idx(files["train_images"], files["train_labels"], split="train")
    test = load_idx(files["test_images"], files["test_labels"], split="test")
    return train, test


def split_validation(dataset: Dataset, size: int) -> tuple[Dataset, Dataset]:
    """Hold out the last ``size`` samples as a validation split."""
    if not 0 <= size < len(dataset):
        raise ValueError(f"validation size {size} must lie in [0, {len(dataset)})")
    cut = len(dataset) - size
    return (
        Dataset(dataset.images[:cut], dataset.labels[:cut], dataset.split),
        Dataset(dataset.images[cut:], dataset.labels[cut:], "validation"),
    )


def dataset_checksum(dataset: Dataset) -> str:
    hasher = hashlib.sha256()
    hasher.update(np.ascontiguousarray(dataset.images).tobytes())
    hasher.update(np.ascontiguousarray(dataset.labels).tobytes())
    return hasher.hexdigest()[:16]
