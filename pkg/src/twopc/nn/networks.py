"""The four benchmark networks and the generic training step."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError
from .layers import Conv2d, Dense, Flatten, Layer, MaxPool, ReLU

INIT_SCALE = 2.0 ** -3
INPUT_SHAPE = (1, 28, 28)
CLASSES = 10


@dataclass
class Network:
    name: str
    layers: list[Layer]
    lr_log2: int  # learning rate = 2^lr_log2
    input_shape: tuple = INPUT_SHAPE
    classes: int = CLASSES
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (1,) + tuple(self.input_shape)
        for layer in self.layers:
            shape = layer.out_shape(shape)
        if shape[1:] != (self.classes,):
            raise DimensionError(f"{self.name}: output shape {shape} does not end in {self.classes}")

    def init_params(self, seed: int) -> list[dict]:
        """Float parameters: weights uniform in +-2^-3, biases zero."""
        rng = np.random.default_rng(seed)
        return [layer.init(rng, INIT_SCALE) for layer in self.layers]

    def to_backend(self, ops, params: list[dict]) -> list[dict]:
        return [{k: ops.param(v) for k, v in p.items()} for p in params]

    def forward(self, ops, params, x):
        if tuple(x.shape[1:]) != tuple(self.input_shape):
            raise DimensionError(f"{self.name} expects inputs of shape {self.input_shape}, got {x.shape[1:]}")
        caches = []
        for layer, p in zip(self.layers, params):
            x, cache = layer.forward(ops, p, x)
            caches.append(cache)
        return x, caches

    def backward(self, ops, params, caches, dy) -> list[dict]:
        grads: list[dict] = [{} for _ in self.layers]
        for i in range(len(self.layers) - 1, -1, -1):
            need_dx = any(layer.trainable for layer in self.layers[:i])
            dy, grads[i] = self.layers[i].backward(ops, params[i], caches[i], dy, need_dx)
            if dy is None:
                break
        return grads

    def update_shift(self, batch: int) -> int:
        """log2(|B| / lr): the SGD step is a pure right shift."""
        b = int(batch).bit_length() - 1
        if 1 << b != batch:
            raise ValueError("batch size must be a power of two")
        return b - self.lr_log2

    def train_step(self, ops, params, x, y, batch: int):
        """One SGD step on a batch; returns (new params, softmax output)."""
        u, caches = self.forward(ops, params, x)
        prob = ops.softmax(u)
        grads = self.backward(ops, params, caches, prob - y)
        shift = self.update_shift(batch)
        new = [{k: ops.sgd(p[k], g[k], shift) for k in p} for p, g in zip(params, grads)]
        return new, prob


def network_a() -> Network:
    return Network("A", [Flatten(), Dense(784, 128), ReLU(), Dense(128, 128), ReLU(),
                         Dense(128, 10), ReLU()], lr_log2=-7)


def network_b() -> Network:
    return Network("B", [Conv2d(1, 16, 5), ReLU(), MaxPool(2), Conv2d(16, 16, 5), ReLU(), MaxPool(2),
                         Flatten(), Dense(256, 100), ReLU(), Dense(100, 10), ReLU()], lr_log2=-5)


def network_c() -> Network:
    return Network("C", [Conv2d(1, 20, 5), ReLU(), MaxPool(2), Conv2d(20, 50, 5), ReLU(), MaxPool(2),
                         Flatten(), Dense(800, 500), ReLU(), Dense(500, 10), ReLU()], lr_log2=-5)


def network_d() -> Network:
    return Network("D", [Conv2d(1, 5, 5, stride=2, pad=2), ReLU(), Flatten(), Dense(980, 100), ReLU(),
                         Dense(100, 10), ReLU()], lr_log2=-5)


NETWORKS = {"A": network_a, "B": network_b, "C": network_c, "D": network_d}


def get_network(name: str) -> Network:
    try:
        return NETWORKS[name.upper()]()
    except KeyError:
        raise ValueError(f"unknown network {name!r}; choose from {sorted(NETWORKS)}") from None
