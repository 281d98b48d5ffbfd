"""Timing of the compiled kernels against their numpy fallbacks."""
from __future__ import annotations

import time

import numpy as np

from . import _kernels
from ._kernels import _pykernels as py


def _best(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(rng: np.random.Generator):
    a = rng.integers(0, 2 ** 64, size=(128, 784), dtype=np.uint64)
    b = rng.integers(0, 2 ** 64, size=(784, 128), dtype=np.uint64)
    x = rng.integers(0, 2 ** 64, size=20000, dtype=np.uint64)
    bits = rng.integers(0, 68, size=(20000, 64), dtype=np.uint8)
    c = _kernels._c
    return [
        ("matmul 128x784x128", lambda: py.matmul_ring(a, b),
         (lambda: c.matmul_u64(a, b)) if c else None),
        ("bit_decompose 20000", lambda: py.bit_decompose(x, 64),
         (lambda: c.bit_decompose_u64(x)) if c else None),
        ("cshares 20000x64", lambda: py.cshares(x, bits, 0, 67, 64),
         (lambda: c.cshares_u64(x, bits, 0, 67)) if c else None),
        ("eq9_share 20000x64", lambda: py.eq9_share(bits, 1, 67, np.uint64),
         (lambda: c.eq9_share_u64(bits, 1, 67)) if c else None),
    ]


def kernel_table(repeats: int = 3, seed: int = 0) -> list[dict]:
    rows = []
    for name, f_py, f_c in kernel_cases(np.random.default_rng(seed)):
        t_py = _best(f_py, repeats)
        row = {"kernel": name, "numpy_s": t_py}
        if f_c is not None:
            t_c = _best(f_c, repeats)
            row.update(cython_s=t_c, speedup=t_py / t_c)
        rows.append(row)
    return rows
