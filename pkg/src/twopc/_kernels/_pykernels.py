"""numpy implementations of the hot kernels (reference and fallback)."""
from __future__ import annotations

import numpy as np


def bit_decompose(a: np.ndarray, bits: int) -> np.ndarray:
    shifts = np.arange(bits - 1, -1, -1, dtype=a.dtype)
    return ((a[..., None] >> shifts) & a.dtype.type(1)).astype(np.uint8)


def matmul_ring(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # numpy integer matmul wraps modulo 2^width
    return np.matmul(a, b)


def cshares(x: np.ndarray, rbits: np.ndarray, party: int, p: int, bits: int) -> np.ndarray:
    """Shares of c[j] = 1 + x[j] - r[j] + sum_{k<j} (x[k] xor r[k])  (mod p).

    x holds public ring values (n,), rbits this party's unreduced Z_p shares
    of the mask bits (n, l), MSB first. Constants enter on party 0's share.
    """
    xb = bit_decompose(x, bits).astype(np.int32)
    rb = rbits.astype(np.int32) % p
    own = 1 if party == 0 else 0
    xr = np.where(xb == 1, own - rb, rb)
    prefix = np.cumsum(xr, axis=1) - xr
    const = (1 + xb) * own
    return np.mod(const - rb + prefix, p).astype(np.uint8)


def eq9_share(bit_shares: np.ndarray, party: int, p: int, dtype: np.dtype) -> np.ndarray:
    """r_i = sum_j 2^{l-1-j} (share_j - floor(p/2) - i) over the ring."""
    bits = bit_shares.shape[-1]
    digits = (bit_shares.astype(np.int64) - (p // 2) - party).astype(dtype)
    weights = np.array([1 << (bits - 1 - j) for j in range(bits)], dtype=object)
    weights = np.array([int(w) for w in weights], dtype=dtype)
    return (digits * weights).sum(axis=-1, dtype=dtype)
