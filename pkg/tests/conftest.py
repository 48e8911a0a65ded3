"""Shared fixtures: tiny networks, synthetic datasets and hand-built IDX files."""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np
import pytest

from src.mnist_data import MNIST_FILES, Dataset, find_mnist_files
from src.nn_engine import LayerParams, NetworkSpec, Parameters, conv, dense, flatten, max_pool, softmax, tanh

TINY_SHAPE = (1, 8, 8)

TINY_DENSE = NetworkSpec(
    name="tiny-dense",
    layers=(flatten(), dense(12), tanh(), dense(10), softmax()),
    input_shape=TINY_SHAPE,
)

TINY_CONV = NetworkSpec(
    name="tiny-conv",
    layers=(conv(2, 3, 3, padding=1), tanh(), max_pool(2), flatten(), dense(10), softmax()),
    input_shape=(1, 6, 6),
)

# Two-class softmax over logits (0, w*x): P(class 1) = sigmoid(w*x) on a single pixel.
LOGISTIC = NetworkSpec(name="logistic", layers=(dense(2), softmax()), input_shape=(1,), classes=2)


def logistic_params(w: float) -> Parameters:
    return Parameters({0: LayerParams(np.array([[0.0, w]]), np.zeros(2))})


def logistic_input_grad(w: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Closed-form dJ/dx of -log P(y | x) for the logistic model."""
    return (1.0 / (1.0 + np.exp(-w * x)) - y) * w


def synthetic_dataset(size: int, shape: tuple[int, ...] = TINY_SHAPE, seed: int = 0, split: str = "train") -> Dataset:
    """Noise images with a bright pixel at the label's position, so classes are learnable."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=size).astype(np.int64)
    images = rng.uniform(0.0, 0.4, size=(size, *shape)).astype(np.float32)
    flat = images.reshape(size, -1)
    flat[np.arange(size), labels] = 1.0
    return Dataset(images, labels, split)


def idx_images_bytes(pixels: np.ndarray) -> bytes:
    count, rows, cols = pixels.shape
    return struct.pack(">4I", 2051, count, rows, cols) + pixels.astype(np.uint8).tobytes()


def idx_labels_bytes(labels: np.ndarray) -> bytes:
    return struct.pack(">2I", 2049, len(labels)) + labels.astype(np.uint8).tobytes()


def write_mnist_dir(root: Path, train_size: int = 64, test_size: int = 20, seed: int = 0) -> Path:
    rng = np.random.default_rng(seed)
    for prefix, size in (("train", train_size), ("test", test_size)):
        pixels = rng.integers(0, 256, size=(size, 28, 28), dtype=np.uint8)
        labels = rng.integers(0, 10, size=size, dtype=np.uint8)
        (root / MNIST_FILES[f"{prefix}_images"]).write_bytes(idx_images_bytes(pixels))
        (root / MNIST_FILES[f"{prefix}_labels"]).write_bytes(idx_labels_bytes(labels))
    return root


def seed_bank_oracle(losses: list[float], d: float, el: float, t: int, window: int = 10) -> list[tuple[str, int, int]]:
    """Reference replay of the seed-bank state machine as plain list code."""
    bag: list[int] = []
    pointer = 0
    set_point = None
    history: list[float] = []
    events = []
    for iteration, loss in enumerate(losses):
        history.append(loss)
        recent = history[-window:]
        current = sum(recent) / len(recent)
        if set_point is None and len(history) >= window:
            set_point = current
        if set_point is not None and set_point - current >= d - 1e-12 and set_point >= el:
            bag.append(iteration)
            set_point = current
            events.append(("save", iteration, iteration))
        if iteration % t == 0 and bag:
            active = bag[pointer]
            pointer = (pointer + 1) % len(bag)
            events.append(("pick", iteration, active))
    return events


def decaying_losses(count: int, seed: int) -> list[float]:
    rng = np.random.default_rng(seed)
    rate = rng.uniform(20, 120)
    steps = np.arange(count)
    return list(2.3 * np.exp(-steps / rate) + 0.05 + rng.normal(0, 0.03, size=count))


@pytest.fixture
def tiny_dense() -> NetworkSpec:
    return TINY_DENSE


@pytest.fixture
def tiny_conv() -> NetworkSpec:
    return TINY_CONV


@pytest.fixture
def train_set() -> Dataset:
    return synthetic_dataset(64, seed=1)


@pytest.fixture
def val_set() -> Dataset:
    return synthetic_dataset(16, seed=2, split="validation")


@pytest.fixture
def eval_set() -> Dataset:
    return synthetic_dataset(40, seed=3, split="test")


@pytest.fixture
def mnist_dir(tmp_path: Path) -> Path:
    root = tmp_path / "mnist"
    root.mkdir()
    return write_mnist_dir(root)


@pytest.fixture
def real_mnist_dir() -> Path:
    data_dir = Path(os.getenv("GAB_DATA_DIR", "data"))
    try:
        find_mnist_files(data_dir)
    except FileNotFoundError:
        pytest.skip("MNIST not present; set GAB_DATA_DIR")
    return data_dir
