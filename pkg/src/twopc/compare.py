"""Secure comparison and the shared-bit utilities built on it.

Comparison outputs come in two forms: XOR-shared bits (uint8, what the
protocol produces) and arithmetic bits in the ring (after ``bit_to_arith``),
which can be multiplied into values.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from .beaver import mul
from .errors import ProtocolError
from .ring import msb, pack, pack_u8, unpack, unpack_u8, wrap


def check_zero(party, c: np.ndarray, return_opened: bool = False):
    """Does any of the shared Z_p values in each row of ``c`` equal 0?

    ``c`` is ``(n, l)`` with entries in [0, p). P0 learns eta per row; P1's
    result is all zeros. Three rounds regardless of ``n``: the Beaver
    opening for the pairwise products, P0's N-masked shares, and P1's
    M-masked, privately shuffled pairs.
    """
    p = party.ring.p
    c = np.asarray(c, dtype=np.uint8)
    if c.ndim != 2 or c.shape[1] % 2:
        raise ProtocolError(f"check_zero expects (n, even l) shares, got {c.shape}")
    n, l = c.shape
    h = l // 2
    perm = party.shared_permutations(n, l)
    c = np.take_along_axis(c, perm, axis=1).astype(np.int32)

    # d[j] = c[j] * c[j + l/2] with a Z_p triple
    t = party.pool.triple_p((n, h), step="check_zero")
    e = (c[:, :h] - t.x) % p
    f = (c[:, h:] - t.y) % p
    peer = unpack_u8(party.exchange(pack_u8(np.concatenate([e, f], axis=1))), (n, l)).astype(np.int32)
    E = (e + peer[:, :h]) % p
    F = (f + peer[:, h:]) % p
    d = (F * t.x + E * t.y + t.z.astype(np.int32) + party.index * E * F) % p

    if party.index == 0:
        N = party.rng.integers(1, p, size=(n, 1), dtype=np.int32)
        party.send(pack_u8(d * N % p))
        buf = party.recv(2 * n * h)
        back = np.frombuffer(buf, dtype=np.uint8).reshape(2, n, h).astype(np.int32)
        opened = (back[0] + back[1] * N) % p
        eta = np.any(opened == 0, axis=1).astype(np.uint8)
        return (eta, opened.astype(np.uint8)) if return_opened else eta

    d0 = np.frombuffer(party.recv(n * h), dtype=np.uint8).reshape(n, h).astype(np.int32)
    M = party.rng.integers(1, p, size=(n, h), dtype=np.int32)
    shuffle = np.argsort(party.rng.random((n, h)), axis=1)
    d0 = np.take_along_axis(d0 * M % p, shuffle, axis=1)
    d1 = np.take_along_axis(d * M % p, shuffle, axis=1)
    party.send(pack_u8(np.stack([d0, d1])))
    eta = np.zeros(n, dtype=np.uint8)
    return (eta, None) if return_opened else eta


def compare_positive(party, a, mask=None) -> np.ndarray:
    """XOR-shared bit [a >= 0] (MSB of a is 0) for every element of ``a``.

    Requires |a| < 2^{l-2}. Four online rounds: reveal x = 2a + r, then
    ``check_zero`` on the bitwise r > x test.
    """
    ring = party.ring
    a = np.asarray(a, dtype=ring.dtype)
    shape = a.shape
    a = a.reshape(-1)
    n = a.size
    mask = mask if mask is not None else party.pool.masks(n, step="compare")
    mask.consume()
    if len(mask) != n:
        raise ProtocolError(f"mask batch has {len(mask)} records for {n} comparisons")

    a2 = a + a
    x_i = a2 + mask.r
    beta = wrap(a2, mask.r)
    x = x_i + unpack(party.exchange(pack(x_i, ring)), (n,), ring)
    delta = (x < x_i).astype(np.uint8)

    c = _kernels.cshares(x, mask.bits, party.index, ring.p, ring.bits)
    eta = check_zero(party, c)

    theta = beta ^ (delta * party.index) ^ eta ^ mask.alpha
    out = msb(a) ^ theta
    if party.index == 0:
        out = out ^ 1  # MSB(a) -> [a >= 0]
    return out.reshape(shape)


def bit_to_arith(party, b) -> np.ndarray:
    """XOR-shared bits -> ring shares of the same bits (one multiplication)."""
    dt = party.ring.dtype
    b = np.asarray(b, dtype=np.uint8).astype(dt)
    zero = np.zeros_like(b)
    x, y = (b, zero) if party.index == 0 else (zero, b)
    return x + y - dt.type(2) * mul(party, x, y, step="bit_to_arith")


def drelu(party, x) -> np.ndarray:
    """Ring shares of [x >= 0]."""
    return bit_to_arith(party, compare_positive(party, x))


def relu(party, x) -> tuple[np.ndarray, np.ndarray]:
    """Returns (shares of max(x, 0), ring-shared derivative bits)."""
    g = drelu(party, x)
    return mul(party, x, g, step="relu"), g


def select(party, bit, a, b) -> np.ndarray:
    """bit ? a : b, with ``bit`` ring-shared."""
    return b + mul(party, bit, np.asarray(a) - np.asarray(b), step="select")


def max_tree(party, x, axis: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """Tournament maximum along ``axis`` plus a shared one-hot argmax.

    Ties go to the earlier element since [a - b >= 0] holds for a == b.
    """
    dt = party.ring.dtype
    x = np.moveaxis(np.asarray(x, dtype=dt), axis, -1)
    k = x.shape[-1]
    if k < 1:
        raise ProtocolError("max over an empty window")
    eye = np.eye(k, dtype=dt) if party.index == 0 else np.zeros((k, k), dtype=dt)
    vals = x
    hot = np.broadcast_to(eye, x.shape + (k,)).copy()  # (..., cand, k)
    while vals.shape[-1] > 1:
        m = vals.shape[-1] // 2
        a, b = vals[..., 0:2 * m:2], vals[..., 1:2 * m:2]
        ha, hb = hot[..., 0:2 * m:2, :], hot[..., 1:2 * m:2, :]
        diff = a - b
        g = drelu(party, diff)
        # one multiplication round for both the value and the one-hot update
        lhs = np.concatenate([g[..., None], np.broadcast_to(g[..., None], g.shape + (k,))], axis=-1)
        rhs = np.concatenate([diff[..., None], ha - hb], axis=-1)
        prod = mul(party, lhs, rhs, step="max")
        new_vals = b + prod[..., 0]
        new_hot = hb + prod[..., 1:]
        if vals.shape[-1] % 2:
            new_vals = np.concatenate([new_vals, vals[..., -1:]], axis=-1)
            new_hot = np.concatenate([new_hot, hot[..., -1:, :]], axis=-2)
        vals, hot = new_vals, new_hot
    return vals[..., 0], np.moveaxis(hot[..., 0, :], -1, axis)


def maxpool(party, x, size: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping ``size``x``size`` max pooling over (N, C, H, W).

    Returns pooled shares (N, C, H/size, W/size) and one-hot shares
    (N, C, H/size, W/size, size*size) for the backward pass.
    """
    x = np.asarray(x, dtype=party.ring.dtype)
    n, c, hgt, wid = x.shape
    if hgt % size or wid % size:
        from .errors import DimensionError

        raise DimensionError(f"pool size {size} does not divide {hgt}x{wid}")
    win = pool_windows(x, size)
    return max_tree(party, win, axis=-1)


def pool_windows(x: np.ndarray, size: int) -> np.ndarray:
    n, c, hgt, wid = x.shape
    w = x.reshape(n, c, hgt // size, size, wid // size, size)
    return w.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, hgt // size, wid // size, size * size)


def unpool(grad: np.ndarray, size: int) -> np.ndarray:
    """Inverse layout of ``pool_windows``: (N, C, h, w, s*s) -> (N, C, h*s, w*s)."""
    n, c, h, w, _ = grad.shape
    g = grad.reshape(n, c, h, w, size, size).transpose(0, 1, 2, 4, 3, 5)
    return g.reshape(n, c, h * size, w * size)
