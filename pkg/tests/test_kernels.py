import os
import subprocess
import sys

import numpy as np
import pytest

from twopc import _kernels
from twopc._kernels import _pykernels as py

needs_c = pytest.mark.skipif(_kernels._c is None, reason="compiled kernels not built")


@needs_c
def test_backend_reports_cython():
    assert _kernels.BACKEND == "cython"


def test_env_var_forces_python():
    env = dict(os.environ, TWOPC_KERNELS="python")
    out = subprocess.run([sys.executable, "-c", "from twopc import _kernels; print(_kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_c
@pytest.mark.parametrize("shape", [(0,), (1,), (7, 3), (100,)])
def test_bit_decompose_agrees(rng, shape):
    a = rng.integers(0, 2 ** 64, size=shape, dtype=np.uint64)
    np.testing.assert_array_equal(_kernels.bit_decompose(a, 64), py.bit_decompose(a, 64))


@needs_c
@pytest.mark.parametrize("m,n,w", [(1, 1, 1), (5, 7, 3), (64, 33, 17)])
def test_matmul_agrees(rng, m, n, w):
    a = rng.integers(0, 2 ** 64, size=(m, n), dtype=np.uint64)
    b = rng.integers(0, 2 ** 64, size=(n, w), dtype=np.uint64)
    np.testing.assert_array_equal(_kernels.matmul_ring(a, b), py.matmul_ring(a, b))


@needs_c
@pytest.mark.parametrize("party", [0, 1])
def test_cshares_and_eq9_agree(rng, party):
    x = rng.integers(0, 2 ** 64, size=50, dtype=np.uint64)
    rbits = rng.integers(0, 68, size=(50, 64), dtype=np.uint8)
    np.testing.assert_array_equal(_kernels.cshares(x, rbits, party, 67, 64), py.cshares(x, rbits, party, 67, 64))
    np.testing.assert_array_equal(_kernels.eq9_share(rbits, party, 67, np.uint64),
                                  py.eq9_share(rbits, party, 67, np.uint64))


def test_matmul_wraps_mod_2_64(kernel_backend):
    a = np.array([[2 ** 63, 3]], dtype=np.uint64)
    b = np.array([[2], [2 ** 63 + 1]], dtype=np.uint64)
    expect = (2 ** 63 * 2 + 3 * (2 ** 63 + 1)) % 2 ** 64
    assert int(_kernels.matmul_ring(a, b)[0, 0]) == expect


def test_cshares_brute_force_small_ring(kernel_backend):
    """A zero appears among the reconstructed c values exactly when r > x."""
    from twopc.ring import RING8, bit_decompose

    p, gen = RING8.p, np.random.default_rng(5)
    x = np.repeat(np.arange(256, dtype=np.uint8), 256)
    r = np.tile(np.arange(256, dtype=np.uint8), 256)
    bits = bit_decompose(r, RING8).astype(np.int64)
    s0 = gen.integers(0, p, size=bits.shape)
    s1 = (bits - s0) % p
    c = (_kernels.cshares(x, s0.astype(np.uint8), 0, p, 8).astype(int)
         + _kernels.cshares(x, s1.astype(np.uint8), 1, p, 8)) % p
    np.testing.assert_array_equal(np.any(c == 0, axis=1), r > x)


def test_protocol_runs_on_both_backends(kernel_backend, session, rng):
    from conftest import run_shared
    from twopc.compare import compare_positive
    from twopc.ring import encode, to_signed

    vals = encode(rng.normal(0, 50, 200))
    out = run_shared(session, compare_positive, vals, rng=rng)
    np.testing.assert_array_equal(out, (to_signed(vals) >= 0).astype(np.uint8))


@needs_c
def test_kernel_benchmark_table():
    from twopc.bench import kernel_table

    rows = kernel_table(repeats=1)
    names = {r["kernel"].split()[0] for r in rows}
    assert names >= {"matmul", "bit_decompose", "cshares", "eq9_share"}
    assert all(r["speedup"] > 0 for r in rows)
