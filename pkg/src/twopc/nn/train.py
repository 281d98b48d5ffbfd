"""Training and evaluation loops shared by all backends."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from ..ring import decode, to_signed
from .mnist import Dataset
from .networks import Network, get_network
from .ops import FixedOps, FloatOps, SecureOps


@dataclass
class TrainConfig:
    network: str = "A"
    batch: int = 128
    epochs: int = 1
    lr_log2: int | None = None  # default: the network's own rate
    train_samples: int | None = 1000
    test_samples: int | None = None
    data_dir: str | None = None
    seed: int = 0
    exp_segments: int = 16
    shuffle: bool = True

    def build(self) -> Network:
        net = get_network(self.network)
        if self.lr_log2 is not None:
            net.lr_log2 = self.lr_log2
        return net

    def to_dict(self) -> dict:
        return asdict(self)


def batch_order(n: int, batch: int, epoch: int, seed: int, shuffle: bool = True) -> list[np.ndarray]:
    """Index batches for one epoch; the trailing partial batch is dropped."""
    idx = np.random.default_rng([seed, epoch]).permutation(n) if shuffle else np.arange(n)
    return [idx[i:i + batch] for i in range(0, n - batch + 1, batch)]


def predict_labels(net: Network, ops, params, x) -> np.ndarray:
    """Argmax of the final layer (first index wins ties)."""
    u, _ = net.forward(ops, params, x)
    scores = to_signed(u) if ops.dtype == np.uint64 else u
    return np.argmax(scores, axis=-1)


def accuracy(net: Network, ops, params, data: Dataset, chunk: int = 500) -> float:
    hits = 0
    pix = data.pixels()
    for i in range(0, len(data), chunk):
        pred = predict_labels(net, ops, params, ops.input(pix[i:i + chunk]))
        hits += int(np.sum(pred == data.labels[i:i + chunk]))
    return hits / max(len(data), 1)


def train_plain(net: Network, ops, params, data: Dataset, cfg: TrainConfig, test: Dataset | None = None,
                callback=None):
    """Train with a plaintext backend (FixedOps or FloatOps)."""
    pix, onehot = data.pixels(), data.one_hot(net.classes)
    history = []
    for epoch in range(cfg.epochs):
        for step, idx in enumerate(batch_order(len(data), cfg.batch, epoch, cfg.seed, cfg.shuffle)):
            params, prob = net.train_step(ops, params, ops.input(pix[idx]), ops.input(onehot[idx]), cfg.batch)
            if callback is not None:
                callback(epoch, step, params, prob, idx)
        if test is not None:
            history.append(accuracy(net, ops, params, test))
    return params, history


def train_party(party, net: Network, params, data: Dataset | None, cfg: TrainConfig, n_samples: int,
                test: Dataset | None = None, callback=None):
    """One party's side of secure training.

    Party 0 owns the data; party 1 passes ``data=None`` and contributes
    zero shares for the inputs. ``params`` are this party's shares.
    Returns (param shares, per-epoch accuracy of the reconstructed model).
    """
    ops = SecureOps(party)
    classes = net.classes
    history = []
    for epoch in range(cfg.epochs):
        for step, idx in enumerate(batch_order(n_samples, cfg.batch, epoch, cfg.seed, cfg.shuffle)):
            if party.index == 0:
                x = ops.input(data.images[idx].astype(np.float64)[:, None] / 255.0)
                y = ops.input(np.eye(classes)[data.labels[idx]])
            else:
                x = np.zeros((len(idx),) + tuple(net.input_shape), dtype=np.uint64)
                y = np.zeros((len(idx), classes), dtype=np.uint64)
            with party.phase("online"):
                params, prob = net.train_step(ops, params, x, y, cfg.batch)
            if callback is not None:
                callback(epoch, step, params, prob, idx)
        if test is not None:
            plain = reconstruct_params(party, params)
            history.append(accuracy(net, FixedOps(), plain, test) if party.index == 0 else None)
    return params, history


def reconstruct_params(party, params) -> list[dict]:
    """Open every parameter tensor (both parties learn the model)."""
    return [{k: party.reveal(v) for k, v in p.items()} for p in params]


def share_params(params_fixed: list[dict], rng: np.random.Generator) -> tuple[list[dict], list[dict]]:
    from ..ring import share

    p0, p1 = [], []
    for p in params_fixed:
        a, b = {}, {}
        for k, v in p.items():
            a[k], b[k] = share(v, rng)
        p0.append(a)
        p1.append(b)
    return p0, p1


def owner_shares(params_fixed: list[dict], party_index: int) -> list[dict]:
    """Model owned by party 0: P0 holds the values, P1 holds zeros."""
    if party_index == 0:
        return [{k: v.copy() for k, v in p.items()} for p in params_fixed]
    return [{k: np.zeros_like(v) for k, v in p.items()} for p in params_fixed]


def infer_party(party, net: Network, params, images: np.ndarray | None, count: int):
    """Secure single-image inference, one query at a time.

    The label is the position of the one-hot argmax, which is the only
    value opened. Returns (labels, per-query online metric deltas).
    """
    from ..compare import max_tree

    ops = SecureOps(party)
    labels, per_query = [], []
    for i in range(count):
        if party.index == 0:
            x = ops.input(images[i:i + 1].astype(np.float64)[:, None] / 255.0)
        else:
            x = np.zeros((1,) + tuple(net.input_shape), dtype=np.uint64)
        before = party.metrics.phases["online"]
        snap = (before.rounds, before.bytes_sent, before.bytes_recv)
        t0 = time.perf_counter()
        with party.phase("online"):
            u, _ = net.forward(ops, params, x)
            _, hot = max_tree(party, u, axis=-1)
            onehot = party.reveal(hot)
        after = party.metrics.phases["online"]
        labels.append(int(np.argmax(onehot[0])))
        per_query.append({
            "rounds": after.rounds - snap[0],
            "bytes_sent": after.bytes_sent - snap[1],
            "bytes_recv": after.bytes_recv - snap[2],
            "seconds": time.perf_counter() - t0,
        })
    return np.array(labels), per_query


def float_baseline(cfg: TrainConfig, train: Dataset, test: Dataset):
    net = cfg.build()
    params = net.init_params(cfg.seed)
    params, hist = train_plain(net, FloatOps(), params, train, cfg, test)
    return params, hist


def fixed_baseline(cfg: TrainConfig, train: Dataset, test: Dataset | None = None):
    net = cfg.build()
    ops = FixedOps()
    params = net.to_backend(ops, net.init_params(cfg.seed))
    return train_plain(net, ops, params, train, cfg, test)


def decode_params(params) -> list[dict]:
    return [{k: decode(v) for k, v in p.items()} for p in params]
