"""The 4-input wrap function and two ways of evaluating it with XOR-shared output.

Inputs: ``m_i`` = MSB of party i's mask share and ``mhat_i`` = parity of
its share of the mask's top bit. Since mhat_0 ^ mhat_1 is the top bit of
r, mhat_0 XNOR mhat_1 is the carry into the top position whenever exactly
one share has its MSB set, which gives

    wrap = (m0 & m1) | ((m0 | m1) & ~(mhat0 ^ mhat1))

as a 5-gate circuit.
"""
from __future__ import annotations

import hashlib

import numpy as np

from ..errors import ProtocolError
from .ot import DealerOT

LABEL = 16
_TAG = 8  # zero padding that lets the evaluator detect a bad row


def wrap_formula(m0, m1, mh0, mh1):
    """Sum-of-products form (five terms)."""
    return ((m0 & mh0 & mh1) | (m1 & mh0 & mh1) | (m0 & (1 - mh0) & (1 - mh1))
            | (m1 & (1 - mh0) & (1 - mh1)) | (m0 & m1))


def wrap_circuit(m0, m1, mh0, mh1):
    return (m0 & m1) | ((m0 | m1) & (1 ^ mh0 ^ mh1))


_g = np.arange(2, dtype=np.uint8)
WRAP_TABLE = wrap_circuit(_g[:, None, None, None], _g[None, :, None, None],
                          _g[None, None, :, None], _g[None, None, None, :]).astype(np.uint8)
WRAP_TABLE.setflags(write=False)

# wires: 0 m0, 1 mhat0 (P0 inputs), 2 m1, 3 mhat1 (P1 inputs), 4.. gate outputs
_GATES = (
    ("xnor", 1, 3),  # 4
    ("or", 0, 2),    # 5
    ("and", 5, 4),   # 6
    ("and", 0, 2),   # 7
    ("or", 7, 6),    # 8 = output
)
_OPS = {"and": np.bitwise_and, "or": np.bitwise_or, "xnor": lambda a, b: 1 ^ a ^ b}
_NWIRES = 4 + len(_GATES)


def _color(labels: np.ndarray) -> np.ndarray:
    return labels[..., -1] & 1


def _hash_rows(la: np.ndarray, lb: np.ndarray, gate: int) -> np.ndarray:
    n = la.shape[0]
    tweak = np.zeros((n, 8), dtype=np.uint8)
    tweak[:, 0] = gate
    tweak[:, 1:] = np.arange(n, dtype="<u8").view(np.uint8).reshape(n, 8)[:, :7]
    keys = np.concatenate([la, lb, tweak], axis=1)
    out = np.empty((n, LABEL + _TAG), dtype=np.uint8)
    for i, row in enumerate(keys):
        out[i] = np.frombuffer(hashlib.sha256(row.tobytes()).digest()[:LABEL + _TAG], dtype=np.uint8)
    return out


class GarbledWrap:
    """Yao garbling with point-and-permute; P0 garbles, P1 evaluates.

    P1 obtains its two input labels per instance by OT. The output stays
    shared: P0 draws alpha_0 and sends ``permute_bit ^ alpha_0`` instead of
    the decoding bit.
    """

    def __init__(self, ot=None):
        self.ot = ot or DealerOT()

    def evaluate(self, party, m: np.ndarray, mhat: np.ndarray) -> np.ndarray:
        m = np.asarray(m, dtype=np.uint8)
        mhat = np.asarray(mhat, dtype=np.uint8)
        if party.index == 0:
            return self._garble(party, m, mhat)
        return self._evaluate(party, m, mhat)

    def _garble(self, party, m0, mh0):
        n = m0.shape[0]
        rng = party.rng
        labels = rng.integers(0, 256, size=(_NWIRES, 2, n, LABEL), dtype=np.uint8)
        lam = rng.integers(0, 2, size=(_NWIRES, n), dtype=np.uint8)
        labels[:, 0, :, -1] = (labels[:, 0, :, -1] & 0xFE) | lam
        labels[:, 1, :, -1] = (labels[:, 1, :, -1] & 0xFE) | (1 ^ lam)
        tables = np.empty((len(_GATES), 4, n, LABEL + _TAG), dtype=np.uint8)
        for g, (op, a, b) in enumerate(_GATES):
            w = 4 + g
            for va in (0, 1):
                for vb in (0, 1):
                    vo = _OPS[op](np.uint8(va), np.uint8(vb))
                    row = 2 * (va ^ lam[a]) + (vb ^ lam[b])  # position by colors
                    pad = _hash_rows(labels[a, va], labels[b, vb], g)
                    plain = np.concatenate([labels[w, vo], np.zeros((n, _TAG), np.uint8)], axis=1)
                    ct = pad ^ plain
                    for r in range(4):
                        sel = row == r
                        tables[g, r, sel] = ct[sel]
        # P1's inputs through OT
        self.ot.send(party, labels[2, 0], labels[2, 1])
        self.ot.send(party, labels[3, 0], labels[3, 1])
        alpha0 = rng.integers(0, 2, size=n, dtype=np.uint8)
        own = np.stack([labels[0, m0, np.arange(n)], labels[1, mh0, np.arange(n)]])
        decode = lam[_NWIRES - 1] ^ alpha0
        party.send(tables.tobytes() + own.tobytes() + decode.tobytes())
        return alpha0

    def _evaluate(self, party, m1, mh1):
        n = m1.shape[0]
        l_m1 = self.ot.receive(party, m1, LABEL)
        l_mh1 = self.ot.receive(party, mh1, LABEL)
        tsize = len(_GATES) * 4 * n * (LABEL + _TAG)
        buf = party.recv(tsize + 2 * n * LABEL + n)
        tables = np.frombuffer(buf[:tsize], dtype=np.uint8).reshape(len(_GATES), 4, n, LABEL + _TAG)
        own = np.frombuffer(buf[tsize:tsize + 2 * n * LABEL], dtype=np.uint8).reshape(2, n, LABEL)
        decode = np.frombuffer(buf[tsize + 2 * n * LABEL:], dtype=np.uint8)
        wires = [own[0], own[1], l_m1, l_mh1]
        idx = np.arange(n)
        for g, (_op, a, b) in enumerate(_GATES):
            la, lb = wires[a], wires[b]
            row = 2 * _color(la) + _color(lb)
            plain = tables[g, row, idx] ^ _hash_rows(la, lb, g)
            if np.any(plain[:, LABEL:]):
                raise ProtocolError(f"garbled gate {g} failed integrity check")
            wires.append(plain[:, :LABEL])
        return _color(wires[-1]) ^ decode


class DealerWrap:
    """One-time truth tables from the dealer: one exchange of masked inputs."""

    def evaluate(self, party, m: np.ndarray, mhat: np.ndarray) -> np.ndarray:
        m = np.asarray(m, dtype=np.uint8)
        mhat = np.asarray(mhat, dtype=np.uint8)
        n = m.shape[0]
        tt = party.pool.ottt(n, step="wrap")
        u_mine = ((m << 1) | mhat) ^ tt.offset
        u_peer = np.frombuffer(party.exchange(u_mine.tobytes()), dtype=np.uint8)
        if u_peer.shape[0] != n or np.any(u_peer > 3):
            raise ProtocolError("malformed truth-table input")
        u0, u1 = (u_mine, u_peer) if party.index == 0 else (u_peer, u_mine)
        return tt.table[np.arange(n), 4 * u0 + u1]


def gc_wrap(party, m, mhat, provider=None) -> np.ndarray:
    return (provider or GarbledWrap()).evaluate(party, m, mhat)
