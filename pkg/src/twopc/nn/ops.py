"""Numeric backends for the network code.

The same layer code runs on three backends:

* ``SecureOps``   one party's view of the two-party protocols (ring shares)
* ``FixedOps``    the plaintext fixed-point mirror: same encoding, same PWL
                  exp, same Newton division, same tie-breaks; truncation is
                  an exact floor shift instead of the shares' local shift
* ``FloatOps``    float64 reference for accuracy comparisons
"""
from __future__ import annotations

import numpy as np

from .. import _kernels
from .. import arith, compare
from ..arith import MAX_POW_EXP, NEWTON_W0, PwlTable, default_table
from ..ring import FRAC_BITS, SCALE, decode, encode, local_truncate, rshift_arith, to_signed


class FloatOps:
    kind = "float"
    dtype = np.float64

    def input(self, x):
        return np.asarray(x, dtype=np.float64)

    param = input

    def zeros(self, shape):
        return np.zeros(shape)

    def matmul(self, a, b):
        return a @ b

    def mul_bits(self, g, x):
        return g * x

    def relu(self, x):
        g = (x >= 0).astype(np.float64)
        return x * g, g

    def maxpool(self, x, size):
        win = compare.pool_windows(x, size)
        hot = np.eye(size * size)[np.argmax(win, axis=-1)]
        return win.max(axis=-1), hot

    def softmax(self, u):
        z = np.exp(u - u.max(axis=-1, keepdims=True))
        return z / z.sum(axis=-1, keepdims=True)

    def sgd(self, w, grad, shift: int):
        return w - grad * 2.0 ** -shift

    def reveal(self, x):
        return np.asarray(x, dtype=np.float64)


class FixedOps:
    """Plaintext fixed-point oracle on uint64 ring values."""

    kind = "fixed"
    dtype = np.uint64

    def __init__(self, table: PwlTable | None = None):
        self.table = table or default_table()

    def input(self, x):
        return encode(np.asarray(x, dtype=np.float64))

    param = input

    def zeros(self, shape):
        return np.zeros(shape, dtype=np.uint64)

    def matmul(self, a, b):
        return rshift_arith(_kernels.matmul_ring(np.ascontiguousarray(a), np.ascontiguousarray(b)), FRAC_BITS)

    def mul_bits(self, g, x):
        return g * x

    def relu(self, x):
        g = (to_signed(x) >= 0).astype(np.uint64)
        return x * g, g

    def maxpool(self, x, size):
        win = compare.pool_windows(x, size)
        idx = np.argmax(to_signed(win), axis=-1)  # first maximum, as in the tournament
        hot = np.eye(size * size, dtype=np.uint64)[idx]
        return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0], hot

    def exp(self, x):
        return fixed_exp(x, self.table)

    def softmax(self, u):
        m = np.max(to_signed(u), axis=-1, keepdims=True).view(np.uint64)
        s = fixed_exp(u - m, self.table)
        return fixed_divide(s, s.sum(axis=-1, dtype=np.uint64)[..., None])

    def sgd(self, w, grad, shift: int):
        return w - rshift_arith(grad, shift)

    def reveal(self, x):
        return decode(x)


class SecureOps:
    """One party's side. Plaintext inputs belong to party 0 (party 1 holds zeros)."""

    kind = "secure"
    dtype = np.uint64

    def __init__(self, party, table: PwlTable | None = None):
        self.party = party
        self.table = table or default_table()

    def input(self, x):
        enc = encode(np.asarray(x, dtype=np.float64))
        return enc if self.party.index == 0 else np.zeros_like(enc)

    param = input

    def zeros(self, shape):
        return np.zeros(shape, dtype=np.uint64)

    def matmul(self, a, b):
        return arith.matmul_fixed(self.party, a, b)

    def mul_bits(self, g, x):
        return arith.mul(self.party, g, x, step="mul_bits")

    def relu(self, x):
        return compare.relu(self.party, x)

    def maxpool(self, x, size):
        return compare.maxpool(self.party, x, size)

    def exp(self, x):
        return arith.exp_pwl(self.party, x, self.table)

    def softmax(self, u):
        return arith.softmax(self.party, u, self.table)

    def sgd(self, w, grad, shift: int):
        return w - local_truncate(grad, self.party.index, shift)

    def reveal(self, x):
        return decode(self.party.reveal(x))

    def open(self, x):
        """Reconstructed ring values (both parties learn them)."""
        return self.party.reveal(x)


# ---------------------------------------------------------------------------
# plaintext mirrors of the nonlinear protocols
# ---------------------------------------------------------------------------

def _trunc(x, k=FRAC_BITS):
    return rshift_arith(x, k)


def fixed_exp(x, table: PwlTable | None = None) -> np.ndarray:
    table = table or default_table()
    x = np.asarray(x, dtype=np.uint64)
    thr, db, dk = table.line_terms()
    xs = x[..., None]
    g = (to_signed(xs - thr) >= 0).astype(np.uint64)
    terms = _trunc(xs * dk) + db
    return (g * terms).sum(axis=-1, dtype=np.uint64) + table.base()


def fixed_pow_alpha(b) -> np.ndarray:
    b = to_signed(np.asarray(b, dtype=np.uint64)).astype(np.int64)
    two_b = 2 * b - 1
    alpha = np.zeros(b.shape, dtype=np.int64)
    for i in range(5, -1, -1):
        e = alpha + (1 << i)
        ok = (e <= MAX_POW_EXP) & (two_b >= (np.int64(1) << np.minimum(e, MAX_POW_EXP)))
        alpha = np.where(ok, e, alpha)
    return alpha


def fixed_divide(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    alpha = fixed_pow_alpha(b)
    k = alpha - FRAC_BITS
    c = np.where(k >= 0, _trunc(b, np.maximum(k, 0)), b << np.maximum(-k, 0).astype(np.uint64))
    one = encode(1.0)
    w0 = encode(NEWTON_W0) - (c + c)
    eps0 = one - _trunc(c * w0)
    eps1, w = _trunc(eps0 * eps0), _trunc(w0 * (one + eps0))
    eps2, w = _trunc(eps1 * eps1), _trunc(w * (one + eps1))
    w = _trunc(w * (one + eps2))
    prod = a * w
    return _trunc(prod, np.broadcast_to(alpha, prod.shape))


__all__ = ["FloatOps", "FixedOps", "SecureOps", "fixed_exp", "fixed_divide", "fixed_pow_alpha", "SCALE"]
