"""Beaver-triple products over the ring: elementwise and matrix."""
from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import DimensionError
from .ring import local_truncate, pack, unpack


def _open_pair(party, e: np.ndarray, f: np.ndarray):
    """Reveal two masked tensors in a single exchange."""
    ring = party.ring
    peer = party.exchange(pack(e, ring) + pack(f, ring))
    split = e.size * ring.nbytes
    return (e + unpack(peer[:split], e.shape, ring),
            f + unpack(peer[split:], f.shape, ring))


def mul(party, a, b, step: str = "mul") -> np.ndarray:
    """Shares of a*b (elementwise, raw ring product). One round."""
    dt = party.ring.dtype
    a, b = np.broadcast_arrays(np.asarray(a, dtype=dt), np.asarray(b, dtype=dt))
    t = party.pool.triple(a.shape, step=step)
    e, f = _open_pair(party, a - t.x, b - t.y)
    z = f * t.x + e * t.y + t.z
    if party.index == 1:
        z = z + e * f
    return z


def mul_fixed(party, a, b, step: str = "mul") -> np.ndarray:
    return local_truncate(mul(party, a, b, step), party.index)


def matmul(party, A, B, step: str = "matmul") -> np.ndarray:
    """Shares of A @ B over the ring. One round."""
    dt = party.ring.dtype
    A = np.asarray(A, dtype=dt)
    B = np.asarray(B, dtype=dt)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise DimensionError(f"cannot multiply {A.shape} by {B.shape}")
    m, n = A.shape
    w = B.shape[1]
    t = party.pool.mat_triple(m, n, w, step=step)
    E, F = _open_pair(party, A - t.u, B - t.v)
    mm = _kernels.matmul_ring
    C = mm(t.u, F) + mm(E, t.v) + t.z
    if party.index == 1:
        C = C + mm(E, F)
    return C


def matmul_fixed(party, A, B, step: str = "matmul") -> np.ndarray:
    return local_truncate(matmul(party, A, B, step), party.index)
