"""Forward inference and backpropagation over a ``NetworkSpec``."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
import numpy.typing as npt

from . import layers as ops
from .errors import LabelRangeError, NonFiniteGradientError, ShapeMismatchError
from .network import LayerKind, LayerParams, NetworkSpec, Parameters, Tensor

logger = logging.getLogger(__name__)

Mode = Literal["train", "eval"]

DEFAULT_EVAL_BATCH = 250


@dataclass
class ForwardTrace:
    """Per-layer caches recorded by ``forward`` for a later backward pass."""

    input_shape: tuple[int, ...]
    caches: list[tuple[int, Any]] = field(default_factory=list)


def _check_batch(spec: NetworkSpec, batch: Tensor) -> None:
    if batch.ndim != len(spec.input_shape) + 1 or tuple(batch.shape[1:]) != tuple(spec.input_shape):
        raise ShapeMismatchError(
            f"{spec.name}: expected batch of shape (B, {', '.join(map(str, spec.input_shape))}), "
            f"got {batch.shape}"
        )


def forward(
    spec: NetworkSpec,
    params: Parameters,
    batch: Tensor,
    mode: Mode = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, ForwardTrace]:
    """Run the network up to (not including) its final Softmax.

    Args:
        spec: Architecture to evaluate.
        params: Weights congruent with ``spec``.
        batch: Inputs of shape ``(B, *spec.input_shape)``.
        mode: ``"train"`` enables dropout; ``"eval"`` is deterministic.
        rng: Source of dropout masks, required in train mode.

    Returns:
        Logits of shape ``(B, spec.classes)`` and the trace for ``backward``.
    """
    _check_batch(spec, batch)
    train = mode == "train"
    x = batch.astype(params.dtype, copy=False)
    trace = ForwardTrace(input_shape=batch.shape)
    for index, layer in enumerate(spec.layers):
        kind = layer.kind
        if kind is LayerKind.SOFTMAX:
            break
        if kind is LayerKind.CONV:
            p = params[index]
            x, cache = ops.conv_forward(x, p.weight, p.bias, layer.stride, layer.padding)
        elif kind is LayerKind.DENSE:
            p = params[index]
            x, cache = ops.dense_forward(x, p.weight, p.bias)
        elif kind is LayerKind.MAXPOOL:
            x, cache = ops.maxpool_forward(x, layer.pool)
        elif kind is LayerKind.RELU:
            x, cache = ops.relu_forward(x)
        elif kind is LayerKind.TANH:
            x, cache = ops.tanh_forward(x)
        elif kind is LayerKind.DROPOUT:
            x, cache = ops.dropout_forward(x, layer.rate, train, rng)
        else:
            x, cache = ops.flatten_forward(x)
        trace.caches.append((index, cache))
    return x, trace


def backward(spec: NetworkSpec, params: Parameters, dlogits: Tensor, trace: ForwardTrace) -> tuple[Parameters, Tensor]:
    """Propagate ``dlogits`` back to parameter and input gradients."""
    grads = Parameters()
    grad = dlogits
    for index, cache in reversed(trace.caches):
        kind = spec.layers[index].kind
        if kind is LayerKind.CONV:
            grad, dweight, dbias = ops.conv_backward(grad, cache)
            grads.layers[index] = LayerParams(dweight, dbias)
        elif kind is LayerKind.DENSE:
            grad, dweight, dbias = ops.dense_backward(grad, cache)
            grads.layers[index] = LayerParams(dweight, dbias)
        elif kind is LayerKind.MAXPOOL:
            grad = ops.maxpool_backward(grad, cache)
        elif kind is LayerKind.RELU:
            grad = ops.relu_backward(grad, cache)
        elif kind is LayerKind.TANH:
            grad = ops.tanh_backward(grad, cache)
        elif kind is LayerKind.DROPOUT:
            grad = ops.dropout_backward(grad, cache)
        else:
            grad = ops.flatten_backward(grad, cache)
    return grads, grad.reshape(trace.input_shape)


def _log_softmax(logits: Tensor) -> npt.NDArray[np.float64]:
    shifted = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_labels(spec: NetworkSpec, labels: npt.ArrayLike, batch_size: int) -> npt.NDArray[np.int64]:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (batch_size,):
        raise ShapeMismatchError(f"expected {batch_size} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= spec.classes):
        raise LabelRangeError(f"labels must lie in [0, {spec.classes}), got range [{labels.min()}, {labels.max()}]")
    return labels


def loss_and_grads(
    spec: NetworkSpec,
    params: Parameters,
    batch: Tensor,
    labels: npt.ArrayLike,
    mode: Mode = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[float, Parameters, Tensor]:
    """Mean softmax cross-entropy with gradients for parameters and inputs.

    The loss is accumulated in float64; gradients keep the parameter dtype.
    """
    labels = _check_labels(spec, labels, batch.shape[0])
    logits, trace = forward(spec, params, batch, mode, rng)
    log_probs = _log_softmax(logits)
    rows = np.arange(len(labels))
    loss = float(-log_probs[rows, labels].mean())
    if not np.isfinite(loss):
        raise NonFiniteGradientError("loss")
    dlogits = np.exp(log_probs)
    dlogits[rows, labels] -= 1.0
    dlogits /= len(labels)
    grads, input_grads = backward(spec, params, dlogits.astype(params.dtype), trace)
    return loss, grads, input_grads


def predict_proba(spec: NetworkSpec, params: Parameters, batch: Tensor) -> Tensor:
    """Eval-mode output of the final Softmax layer."""
    logits, _ = forward(spec, params, batch, "eval")
    return np.exp(_log_softmax(logits)).astype(params.dtype)


def predict(spec: NetworkSpec, params: Parameters, images: Tensor, *, chunk: int = DEFAULT_EVAL_BATCH) -> npt.NDArray[np.int64]:
    predictions = [
        forward(spec, params, images[start : start + chunk], "eval")[0].argmax(axis=1)
        for start in range(0, len(images), chunk)
    ]
    return np.concatenate(predictions) if predictions else np.zeros(0, dtype=np.int64)


def evaluate(
    spec: NetworkSpec,
    params: Parameters,
    images: Tensor,
    labels: npt.ArrayLike,
    *,
    chunk: int = DEFAULT_EVAL_BATCH,
) -> tuple[float, float]:
    """Eval-mode mean loss and accuracy (percent) over a whole dataset."""
    labels = _check_labels(spec, labels, images.shape[0])
    total_loss = 0.0
    correct = 0
    for start in range(0, len(images), chunk):
        logits, _ = forward(spec, params, images[start : start + chunk], "eval")
        batch_labels = labels[start : start + chunk]
        log_probs = _log_softmax(logits)
        total_loss += float(-log_probs[np.arange(len(batch_labels)), batch_labels].sum())
        correct += int((logits.argmax(axis=1) == batch_labels).sum())
    count = max(len(images), 1)
    return total_loss / count, 100.0 * correct / count
