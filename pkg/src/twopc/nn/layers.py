"""Layers with explicit forward/backward over a numeric backend (``ops``).

Parameters live in plain dicts so the same layer objects serve every
backend. Convolutions are lowered to matrix products with im2col.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..compare import unpool
from ..errors import DimensionError


class Layer:
    trainable = False

    def init(self, rng: np.random.Generator, scale: float) -> dict:
        return {}

    def out_shape(self, shape: tuple) -> tuple:
        return shape

    def forward(self, ops, params, x):
        raise NotImplementedError

    def backward(self, ops, params, cache, dy, need_dx: bool = True):
        raise NotImplementedError


@dataclass
class Dense(Layer):
    trainable = True
    n_in: int
    n_out: int

    def init(self, rng, scale):
        return {"W": rng.uniform(-scale, scale, (self.n_in, self.n_out)), "b": np.zeros(self.n_out)}

    def out_shape(self, shape):
        if shape[-1] != self.n_in:
            raise DimensionError(f"dense layer expects {self.n_in} inputs, got {shape}")
        return shape[:-1] + (self.n_out,)

    def forward(self, ops, params, x):
        if x.shape[-1] != self.n_in:
            raise DimensionError(f"dense layer expects {self.n_in} inputs, got {x.shape}")
        return ops.matmul(x, params["W"]) + params["b"], x

    def backward(self, ops, params, x, dy, need_dx=True):
        grads = {"W": ops.matmul(x.T, dy), "b": dy.sum(axis=0, dtype=dy.dtype)}
        dx = ops.matmul(dy, params["W"].T) if need_dx else None
        return dx, grads


class ReLU(Layer):
    def forward(self, ops, params, x):
        y, g = ops.relu(x)
        return y, g

    def backward(self, ops, params, g, dy, need_dx=True):
        return ops.mul_bits(g, dy), {}

    def __repr__(self):
        return "ReLU()"


class Flatten(Layer):
    def out_shape(self, shape):
        return (shape[0], int(np.prod(shape[1:])))

    def forward(self, ops, params, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, ops, params, shape, dy, need_dx=True):
        return dy.reshape(shape), {}

    def __repr__(self):
        return "Flatten()"


@dataclass
class MaxPool(Layer):
    size: int = 2

    def out_shape(self, shape):
        n, c, h, w = shape
        return (n, c, h // self.size, w // self.size)

    def forward(self, ops, params, x):
        return ops.maxpool(x, self.size)

    def backward(self, ops, params, hot, dy, need_dx=True):
        spread = ops.mul_bits(hot, np.broadcast_to(dy[..., None], hot.shape))
        return unpool(spread, self.size), {}


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> tuple[np.ndarray, int, int]:
    """(N, C, H, W) -> (N*oh*ow, C*k*k) patches."""
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride][:, :, :oh, :ow]  # (N, C, oh, ow, k, k)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
    return np.ascontiguousarray(cols), oh, ow


def col2im(cols: np.ndarray, shape: tuple, k: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of ``im2col``: overlapping patch entries are summed."""
    n, c, h, w = shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    patches = cols.reshape(n, oh, ow, c, k, k)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                patches[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return out[:, :, pad:pad + h, pad:pad + w]


@dataclass
class Conv2d(Layer):
    trainable = True
    c_in: int
    c_out: int
    k: int
    stride: int = 1
    pad: int = 0

    def init(self, rng, scale):
        return {"W": rng.uniform(-scale, scale, (self.c_in * self.k * self.k, self.c_out)),
                "b": np.zeros(self.c_out)}

    def out_shape(self, shape):
        n, c, h, w = shape
        if c != self.c_in:
            raise DimensionError(f"conv expects {self.c_in} channels, got {c}")
        oh = (h + 2 * self.pad - self.k) // self.stride + 1
        ow = (w + 2 * self.pad - self.k) // self.stride + 1
        return (n, self.c_out, oh, ow)

    def forward(self, ops, params, x):
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise DimensionError(f"conv expects (N, {self.c_in}, H, W), got {x.shape}")
        cols, oh, ow = im2col(x, self.k, self.stride, self.pad)
        y = ops.matmul(cols, params["W"]) + params["b"]
        n = x.shape[0]
        y = y.reshape(n, oh, ow, self.c_out).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(y), (cols, x.shape)

    def backward(self, ops, params, cache, dy, need_dx=True):
        cols, shape = cache
        dy2 = np.ascontiguousarray(dy.transpose(0, 2, 3, 1).reshape(-1, self.c_out))
        grads = {"W": ops.matmul(cols.T, dy2), "b": dy2.sum(axis=0, dtype=dy2.dtype)}
        if not need_dx:
            return None, grads
        dcols = ops.matmul(dy2, params["W"].T)
        return col2im(dcols, shape, self.k, self.stride, self.pad), grads
