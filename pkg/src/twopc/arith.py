"""Fixed-point arithmetic protocols: products, Pow, division, exp, softmax, sigmoid.

All values are fixed-point ring shares with ``FRAC_BITS`` fractional bits
unless a docstring says "raw". Public constants enter on party 0's share.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .beaver import matmul, matmul_fixed, mul, mul_fixed  # noqa: F401  (re-exported)
from .compare import bit_to_arith, compare_positive, drelu, max_tree
from .errors import DomainError
from .ring import FRAC_BITS, SCALE, encode, local_truncate

NEWTON_W0 = 2.9142
MAX_POW_EXP = 61  # thresholds 2^e with e >= 62 are out of comparison range


def add_const(party, x, c) -> np.ndarray:
    """x + c for a public ring constant ``c`` (already encoded)."""
    x = np.asarray(x, dtype=party.ring.dtype)
    if party.index == 0:
        return x + np.asarray(c, dtype=party.ring.dtype)
    return x.copy()


def mul_const(party, x, c: float) -> np.ndarray:
    """x * c for a public real ``c`` (one local truncation)."""
    x = np.asarray(x, dtype=party.ring.dtype)
    return local_truncate(x * encode(c), party.index)


def shift_public(party, x, k) -> np.ndarray:
    """x * 2^{-k} for a public per-element integer ``k`` (negative k shifts left)."""
    x = np.asarray(x, dtype=party.ring.dtype)
    k = np.broadcast_to(np.asarray(k, dtype=np.int64), x.shape)
    right = local_truncate(x, party.index, np.maximum(k, 0))
    return right << np.maximum(-k, 0).astype(x.dtype)


# ---------------------------------------------------------------------------
# Pow and division
# ---------------------------------------------------------------------------

def _reveal_bits(party, bits) -> np.ndarray:
    return party.reveal_bits(bits)


def pow_alpha(party, b, check_domain: bool = True) -> np.ndarray:
    """Public alpha with 2^{alpha-1} < b <= 2^alpha on the raw representation.

    Binary search over the six bits of alpha: alpha ends as
    floor(log2(2b - 1)), decided by comparing 2b - 1 with 2^{alpha + 2^i}.
    Each step's comparison bit is opened, which is the intended leak.
    """
    dt = party.ring.dtype
    b = np.asarray(b, dtype=dt)
    if check_domain:
        pos = _reveal_bits(party, compare_positive(party, add_const(party, b, dt.type(2 ** 64 - 1))))
        if not np.all(pos):
            raise DomainError("pow_alpha requires b > 0")
    two_b = add_const(party, b + b, dt.type(2 ** 64 - 1))  # 2b - 1
    alpha = np.zeros(b.shape, dtype=np.int64)
    for i in range(5, -1, -1):
        e = alpha + (1 << i)
        in_range = e <= MAX_POW_EXP
        thr = (np.uint64(1) << np.minimum(e, MAX_POW_EXP).astype(np.uint64)).astype(dt)
        diff = two_b - thr if party.index == 0 else two_b
        ok = _reveal_bits(party, compare_positive(party, diff)).astype(bool) & in_range
        alpha = np.where(ok, e, alpha)
    return alpha


def reciprocal(party, b) -> tuple[np.ndarray, np.ndarray]:
    """Newton-style reciprocal of positive ``b``.

    Returns ``(w, alpha)`` with w ~ 2^alpha / b in fixed point, so that
    a / b = (a * w) >> alpha. c = b / 2^alpha lies in (0.5, 1].
    """
    alpha = pow_alpha(party, b)
    c = shift_public(party, b, alpha - FRAC_BITS)
    w0 = add_const(party, -(c + c), encode(NEWTON_W0))
    one = encode(1.0)
    eps0 = add_const(party, -mul_fixed(party, c, w0, step="div"), one)
    # batch the next squaring with the running product
    both = mul_fixed(party, np.stack([eps0, w0]), np.stack([eps0, add_const(party, eps0, one)]), step="div")
    eps1, w = both[0], both[1]
    both = mul_fixed(party, np.stack([eps1, w]), np.stack([eps1, add_const(party, eps1, one)]), step="div")
    eps2, w = both[0], both[1]
    w = mul_fixed(party, w, add_const(party, eps2, one), step="div")
    return w, alpha


def divide(party, a, b) -> np.ndarray:
    """a / b for b > 0. ``b`` broadcasts against ``a`` (e.g. one divisor per row)."""
    w, alpha = reciprocal(party, b)
    a = np.asarray(a, dtype=party.ring.dtype)
    w_b, alpha_b = np.broadcast_to(w, np.broadcast_shapes(a.shape, w.shape)), alpha
    prod = mul(party, a, w_b, step="div")
    return local_truncate(prod, party.index, np.broadcast_to(alpha_b, prod.shape))


# ---------------------------------------------------------------------------
# piecewise-linear exp
# ---------------------------------------------------------------------------

@dataclass
class PwlTable:
    """Chord interpolation of e^x on [x_lo, x_hi] with n equal segments."""

    n: int
    x_lo: float
    x_hi: float
    knots: np.ndarray
    values: np.ndarray
    slopes: np.ndarray

    @classmethod
    def build(cls, n: int = 16, x_lo: float = -10.0, x_hi: float = 0.0) -> "PwlTable":
        if n < 1:
            raise ValueError("need at least one segment")
        knots = np.linspace(x_lo, x_hi, n + 1)
        values = np.exp(knots)
        slopes = np.diff(values) / np.diff(knots)
        return cls(n, float(x_lo), float(x_hi), knots, values, slopes)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "x_lo": self.x_lo, "x_hi": self.x_hi,
                           "knots": self.knots.tolist(), "values": self.values.tolist(),
                           "slopes": self.slopes.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "PwlTable":
        d = json.loads(text)
        return cls(d["n"], d["x_lo"], d["x_hi"], np.array(d["knots"]), np.array(d["values"]),
                   np.array(d["slopes"]))

    def line_terms(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Encoded (thresholds, intercept steps, slope steps).

        Segment j's line is y_j + k_j (x - x_j) = b_j + k_j x. Below the
        first knot the output is the constant e^{x_lo}. The secure and the
        plaintext evaluators both compute
        ``e^{x_lo} + sum_j [x >= x_j] (db_j + trunc(dk_j * x))``.
        """
        k = self.slopes
        b = self.values[:-1] - k * self.knots[:-1]
        b_prev = np.concatenate([[math.exp(self.x_lo)], b[:-1]])
        k_prev = np.concatenate([[0.0], k[:-1]])
        thr = encode(self.knots[:-1])
        db = encode(b).view(np.int64) - encode(b_prev).view(np.int64)
        dk = encode(k).view(np.int64) - encode(k_prev).view(np.int64)
        return thr, db.view(np.uint64), dk.view(np.uint64)

    def base(self) -> np.uint64:
        return encode(math.exp(self.x_lo))

    def evaluate_float(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        j = np.clip(np.floor((x - self.x_lo) / (self.x_hi - self.x_lo) * self.n), 0, self.n - 1).astype(int)
        y = self.values[j] + self.slopes[j] * (x - self.knots[j])
        return np.where(x < self.x_lo, math.exp(self.x_lo), y)


_DEFAULT_TABLE = None


def default_table() -> PwlTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = PwlTable.build(16)
    return _DEFAULT_TABLE


def exp_pwl(party, x, table: PwlTable | None = None) -> np.ndarray:
    """e^x for x <= 0 without revealing the segment.

    n batched comparisons give shared indicators [x >= x_j]; summing the
    indicator-weighted line differences telescopes to the active segment's
    line. Constant rounds (6) for any n.
    """
    table = table or default_table()
    dt = party.ring.dtype
    x = np.asarray(x, dtype=dt)
    thr, db, dk = table.line_terms()
    n = table.n
    xs = np.broadcast_to(x[..., None], x.shape + (n,))
    diff = xs - thr if party.index == 0 else xs.copy()
    g = drelu(party, diff)
    terms = local_truncate(xs * dk, party.index)
    if party.index == 0:
        terms = terms + db
    picked = mul(party, g, terms, step="exp")
    return add_const(party, picked.sum(axis=-1, dtype=dt), table.base())


def softmax(party, u, table: PwlTable | None = None) -> np.ndarray:
    """Row-wise softmax over the last axis (max-shifted, PWL exp, one division per row)."""
    u = np.asarray(u, dtype=party.ring.dtype)
    if u.shape[-1] < 2:
        raise DomainError("softmax needs at least two classes")
    m, _ = max_tree(party, u, axis=-1)
    s = exp_pwl(party, u - m[..., None], table)
    total = s.sum(axis=-1, dtype=u.dtype)
    return divide(party, s, total[..., None])


def sigmoid(party, x, table: PwlTable | None = None) -> np.ndarray:
    """1 / (1 + e^{-x}) via sigma(|x|) and the reflection sigma(x) = 1 - sigma(-x)."""
    dt = party.ring.dtype
    x = np.asarray(x, dtype=dt)
    g = drelu(party, x)  # ring bits
    sign = add_const(party, g + g, dt.type(2 ** 64 - 1))  # +-1, raw
    absx = mul(party, sign, x, step="sigmoid")
    e = exp_pwl(party, -absx, table)
    q = divide(party, np.broadcast_to(add_const(party, np.zeros_like(x), encode(1.0)), x.shape),
               add_const(party, e, encode(1.0)))
    return add_const(party, -g * dt.type(SCALE), encode(1.0)) + mul(party, sign, q, step="sigmoid")


__all__ = [
    "add_const", "mul_const", "shift_public", "pow_alpha", "reciprocal", "divide", "PwlTable",
    "default_table", "exp_pwl", "softmax", "sigmoid", "mul", "mul_fixed", "matmul", "matmul_fixed",
    "bit_to_arith",
]
