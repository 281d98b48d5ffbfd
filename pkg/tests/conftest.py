"""Shared fixtures: two-party sessions and kernel backend switching."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from twopc import _kernels
from twopc.ring import RING64, reconstruct, share
from twopc.runtime import LocalSession

DATA_DIR = Path(__file__).parent / "data" / "mnist-subset"

KERNEL_BACKENDS = ["python"] + (["cython"] if _kernels._c is not None else [])


@pytest.fixture(params=KERNEL_BACKENDS)
def kernel_backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    if request.param == "python":
        monkeypatch.setattr(_kernels, "_c", None)
    return request.param


@pytest.fixture
def session():
    with LocalSession(bytes(range(32))) as sess:
        yield sess


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def run_shared(sess, fn, *values, rng=None, ring=RING64, open_result=True):
    """Share each plaintext value, run ``fn(party, *shares)`` on both sides.

    Returns the reconstructed result (or the raw pair if ``open_result`` is
    false). Tuples of results are reconstructed elementwise.
    """
    rng = rng if rng is not None else np.random.default_rng(99)
    pairs = [share(v, rng, ring) for v in values]
    r0, r1 = sess.run(fn, *[p[0] for p in pairs], args1=tuple(p[1] for p in pairs))
    if not open_result:
        return r0, r1
    if isinstance(r0, tuple):
        return tuple(_open(a, b) for a, b in zip(r0, r1))
    return _open(r0, r1)


def _open(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype == np.uint8:
        return a ^ b
    return reconstruct(a, b)


def mask_invariants(m0, m1, ring=RING64) -> dict:
    """Check a pair of MaskBatch halves; returns one boolean per invariant."""
    from twopc import _kernels
    from twopc.ring import bits_to_ring, wrap

    p = ring.p
    bits = (m0.bits.astype(np.int64) + m1.bits) % p
    r = m0.r + m1.r
    return {
        "bits_binary": bool(np.all(bits <= 1)),
        "bits_reconstruct_r": bool(np.array_equal(bits_to_ring(bits.astype(ring.dtype), ring), r)),
        "eq9_shares": bool(np.array_equal(_kernels.eq9_share(m0.bits, 0, p, ring.dtype), m0.r)
                           and np.array_equal(_kernels.eq9_share(m1.bits, 1, p, ring.dtype), m1.r)),
        "alpha_is_wrap": bool(np.array_equal(m0.alpha ^ m1.alpha, wrap(m0.r, m1.r))),
    }


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
