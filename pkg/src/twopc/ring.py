"""Exact arithmetic over Z_{2^l} and Z_p, fixed-point codec and bit utilities.

Ring elements are numpy unsigned arrays whose dtype width equals the ring
size, so every arithmetic operation wraps silently. The production ring is
l = 64 with p = 67; a reduced l = 8, p = 11 variant exists so that the
comparison stack can be swept exhaustively.

Bit vectors are MSB-first: index 0 holds bit l-1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RangeError

FRAC_BITS = 16
SCALE = 1 << FRAC_BITS


@dataclass(frozen=True)
class RingSpec:
    bits: int
    p: int

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(f"uint{self.bits}")

    @property
    def sdtype(self) -> np.dtype:
        return np.dtype(f"int{self.bits}")

    @property
    def half_p(self) -> int:
        return self.p // 2

    @property
    def nbytes(self) -> int:
        return self.bits // 8

    @property
    def mask(self) -> int:
        return (1 << self.bits) - 1

    def weights(self) -> np.ndarray:
        """2^{l-1-j} for j = 0..l-1, as ring elements (MSB-first)."""
        one = self.dtype.type(1)
        return np.array([one << self.dtype.type(self.bits - 1 - j) for j in range(self.bits)],
                        dtype=self.dtype)


RING64 = RingSpec(64, 67)
RING8 = RingSpec(8, 11)

P = RING64.p
HALF_P = RING64.half_p


def as_ring(x, ring: RingSpec = RING64) -> np.ndarray:
    """Coerce ints (any sign, any size) or arrays to ring elements."""
    if isinstance(x, np.ndarray):
        if x.dtype == ring.dtype:
            return x
        if x.dtype.kind in "iu" and x.dtype.itemsize <= ring.dtype.itemsize:
            return x.astype(ring.sdtype if x.dtype.kind == "i" else ring.dtype).view(ring.dtype)
        if x.dtype.kind in "iu":
            return (x.astype(np.int64) & ring.mask).astype(ring.dtype)
    arr = np.asarray(x, dtype=object)
    flat = [int(v) & ring.mask for v in arr.reshape(-1)]
    return np.array(flat, dtype=ring.dtype).reshape(arr.shape)


def to_signed(a: np.ndarray) -> np.ndarray:
    """Two's-complement view of ring elements."""
    a = np.asarray(a)
    return a.view(np.dtype(f"int{a.dtype.itemsize * 8}"))


def encode(x, frac_bits: int = FRAC_BITS) -> np.ndarray:
    """Real -> fixed-point ring element, rounding half away from zero."""
    x = np.asarray(x, dtype=np.float64)
    limit = float(2 ** (64 - frac_bits - 1))
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) >= limit):
        raise RangeError(f"value out of fixed-point range |x| < 2^{64 - frac_bits - 1}")
    scaled = np.sign(x) * np.floor(np.abs(x) * (1 << frac_bits) + 0.5)
    out = scaled.astype(np.int64).view(np.uint64)
    return out[()] if out.ndim == 0 else out


def decode(a, frac_bits: int = FRAC_BITS) -> np.ndarray:
    """Fixed-point ring element -> float."""
    a = np.asarray(a, dtype=np.uint64)
    out = a.view(np.int64).astype(np.float64) / (1 << frac_bits)
    return out[()] if out.ndim == 0 else out


def wrap(a, b) -> np.ndarray:
    """Carry bit of the integer sum a + b past the ring size."""
    a = np.asarray(a)
    b = np.asarray(b, dtype=a.dtype)
    return ((a + b) < a).astype(np.uint8)


def msb(a) -> np.ndarray:
    a = np.asarray(a)
    shift = a.dtype.type(a.dtype.itemsize * 8 - 1)
    return (a >> shift).astype(np.uint8)


def bit_decompose(a, ring: RingSpec = RING64) -> np.ndarray:
    """(..., l) uint8 array of bits, MSB first."""
    from . import _kernels

    a = np.asarray(a, dtype=ring.dtype)
    return _kernels.bit_decompose(a, ring.bits)


def bits_to_ring(bits, ring: RingSpec = RING64) -> np.ndarray:
    bits = np.asarray(bits).astype(ring.dtype)
    return (bits * ring.weights()).sum(axis=-1, dtype=ring.dtype)


def rshift_arith(a, k) -> np.ndarray:
    """Arithmetic (sign-propagating) shift; k may be an array."""
    a = np.asarray(a)
    s = to_signed(a)
    k = np.asarray(k).astype(s.dtype)
    return (s >> k).view(a.dtype)


def local_truncate(share, party: int, bits=FRAC_BITS) -> np.ndarray:
    """Two-party probabilistic truncation performed on one share.

    Party 0 shifts its share; party 1 shifts the negation of its share and
    negates back. The sum differs from floor(x / 2^bits) by at most one unit
    unless the shares straddle the sign boundary, which happens with
    probability about |x| / 2^(l-1).
    """
    share = np.asarray(share)
    if party == 0:
        return rshift_arith(share, bits)
    return -rshift_arith(-share, bits)


def share(x, rng: np.random.Generator, ring: RingSpec = RING64) -> tuple[np.ndarray, np.ndarray]:
    """Additively split ring elements into two uniformly random shares."""
    x = as_ring(x, ring)
    s0 = random_ring(rng, x.shape, ring)
    return s0, x - s0


def reconstruct(s0, s1) -> np.ndarray:
    return np.asarray(s0) + np.asarray(s1)


def random_ring(rng: np.random.Generator, shape, ring: RingSpec = RING64) -> np.ndarray:
    return rng.integers(0, 1 << ring.bits, size=shape, dtype=ring.dtype, endpoint=False)


def pack(a, ring: RingSpec = RING64) -> bytes:
    """Little-endian wire form: l/8 bytes per element."""
    return np.ascontiguousarray(a, dtype=ring.dtype.newbyteorder("<")).tobytes()


def unpack(buf: bytes, shape, ring: RingSpec = RING64) -> np.ndarray:
    from .errors import ProtocolError

    n = int(np.prod(shape, dtype=np.int64))
    if len(buf) != n * ring.nbytes:
        raise ProtocolError(f"expected {n * ring.nbytes} payload bytes, got {len(buf)}")
    return np.frombuffer(buf, dtype=ring.dtype.newbyteorder("<")).astype(ring.dtype).reshape(shape)


def pack_u8(a) -> bytes:
    return np.ascontiguousarray(a, dtype=np.uint8).tobytes()


def unpack_u8(buf: bytes, shape) -> np.ndarray:
    from .errors import ProtocolError

    n = int(np.prod(shape, dtype=np.int64))
    if len(buf) != n:
        raise ProtocolError(f"expected {n} payload bytes, got {len(buf)}")
    return np.frombuffer(buf, dtype=np.uint8).reshape(shape).copy()
