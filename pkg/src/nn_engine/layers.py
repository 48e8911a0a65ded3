"""Forward and backward kernels for each layer kind.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache. Convolution is a valid
cross-correlation (no kernel flip) lowered to a matrix product over
im2col patches.
"""

from __future__ import annotations

from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .network import Tensor


def conv_forward(x: Tensor, weight: Tensor, bias: Tensor, stride: int, padding: int) -> tuple[Tensor, Any]:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    batch, channels = x.shape[:2]
    out_channels, _, kh, kw = weight.shape
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * out_h * out_w, channels * kh * kw)
    out = cols @ weight.reshape(out_channels, -1).T + bias
    out = out.reshape(batch, out_h, out_w, out_channels).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (cols, x.shape, weight, stride, padding, out_h, out_w)


def conv_backward(dout: Tensor, cache: Any) -> tuple[Tensor, Tensor, Tensor]:
    cols, padded_shape, weight, stride, padding, out_h, out_w = cache
    batch, channels = padded_shape[:2]
    out_channels, _, kh, kw = weight.shape
    dout_mat = dout.transpose(0, 2, 3, 1).reshape(-1, out_channels)
    dweight = (dout_mat.T @ cols).reshape(weight.shape)
    dbias = dout_mat.sum(axis=0)
    dcols = (dout_mat @ weight.reshape(out_channels, -1)).reshape(batch, out_h, out_w, channels, kh, kw)
    dx = np.zeros(padded_shape, dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += dcols[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    if padding:
        dx = dx[:, :, padding:-padding, padding:-padding]
    return dx, dweight, dbias


def maxpool_forward(x: Tensor, size: int) -> tuple[Tensor, Any]:
    batch, channels, height, width = x.shape
    out_h, out_w = height // size, width // size
    cropped = x[:, :, : out_h * size, : out_w * size]
    windows = (
        cropped.reshape(batch, channels, out_h, size, out_w, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, channels, out_h, out_w, size * size)
    )
    # argmax returns the first maximum, i.e. ties go to the row-major first cell
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return out, (x.shape, argmax, size)


def maxpool_backward(dout: Tensor, cache: Any) -> Tensor:
    input_shape, argmax, size = cache
    batch, channels, out_h, out_w = dout.shape
    dwindows = np.zeros((batch, channels, out_h, out_w, size * size), dtype=dout.dtype)
    np.put_along_axis(dwindows, argmax[..., None], dout[..., None], axis=-1)
    routed = (
        dwindows.reshape(batch, channels, out_h, out_w, size, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, channels, out_h * size, out_w * size)
    )
    dx = np.zeros(input_shape, dtype=dout.dtype)
    dx[:, :, : out_h * size, : out_w * size] = routed
    return dx


def dense_forward(x: Tensor, weight: Tensor, bias: Tensor) -> tuple[Tensor, Any]:
    return x @ weight + bias, (x, weight)


def dense_backward(dout: Tensor, cache: Any) -> tuple[Tensor, Tensor, Tensor]:
    x, weight = cache
    return dout @ weight.T, x.T @ dout, dout.sum(axis=0)


def relu_forward(x: Tensor) -> tuple[Tensor, Any]:
    mask = x > 0
    return np.where(mask, x, 0).astype(x.dtype, copy=False), mask


def relu_backward(dout: Tensor, mask: Any) -> Tensor:
    return dout * mask


def tanh_forward(x: Tensor) -> tuple[Tensor, Any]:
    out = np.tanh(x)
    return out, out


def tanh_backward(dout: Tensor, out: Any) -> Tensor:
    return dout * (1 - out * out)


def dropout_forward(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None) -> tuple[Tensor, Any]:
    """Inverted dropout: scaling happens at train time so eval is the identity."""
    if not train or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout needs a random generator")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def dropout_backward(dout: Tensor, mask: Any) -> Tensor:
    return dout if mask is None else dout * mask


def flatten_forward(x: Tensor) -> tuple[Tensor, Any]:
    return x.reshape(x.shape[0], -1), x.shape


def flatten_backward(dout: Tensor, shape: Any) -> Tensor:
    return dout.reshape(shape)
