"""Hot-kernel dispatch.

The compiled extension is used for 64-bit ring data when it was built;
everything else (and every call when ``TWOPC_KERNELS=python``) goes to the
numpy implementations. ``BACKEND`` reports which one is live.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels as py

try:
    if os.environ.get("TWOPC_KERNELS", "").lower() == "python":
        raise ImportError("forced python kernels")
    from . import _ckernels as _c
except ImportError:
    _c = None

BACKEND = "cython" if _c is not None else "python"


def _use_c(*arrays) -> bool:
    return _c is not None and all(a.dtype == np.uint64 for a in arrays)


def bit_decompose(a: np.ndarray, bits: int) -> np.ndarray:
    if bits == 64 and _use_c(a):
        flat = np.ascontiguousarray(a.reshape(-1))
        return _c.bit_decompose_u64(flat).reshape(a.shape + (64,))
    return py.bit_decompose(a, bits)


def matmul_ring(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim == 2 and b.ndim == 2 and _use_c(a, b):
        return _c.matmul_u64(np.ascontiguousarray(a), np.ascontiguousarray(b))
    return py.matmul_ring(a, b)


def cshares(x: np.ndarray, rbits: np.ndarray, party: int, p: int, bits: int) -> np.ndarray:
    if bits == 64 and _use_c(x):
        return _c.cshares_u64(np.ascontiguousarray(x), np.ascontiguousarray(rbits, dtype=np.uint8), party, p)
    return py.cshares(x, rbits, party, p, bits)


def eq9_share(bit_shares: np.ndarray, party: int, p: int, dtype) -> np.ndarray:
    dtype = np.dtype(dtype)
    if dtype == np.uint64 and _c is not None and bit_shares.shape[-1] == 64:
        return _c.eq9_share_u64(np.ascontiguousarray(bit_shares, dtype=np.uint8), party, p)
    return py.eq9_share(bit_shares, party, p, dtype)
