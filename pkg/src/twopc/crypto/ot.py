"""1-out-of-2 oblivious transfer providers.

Party 0 is always the sender and party 1 the receiver. Messages are
``(n, width)`` uint8 arrays; the receiver gets row ``j`` of ``m0`` or ``m1``
according to ``choice[j]``.

``DealerOT`` derandomises dealer-issued random OTs (Beaver's trick), so
online traffic is one choice-correction byte per OT plus the masked pair.
``BaseOT`` is the Chou-Orlandi "simplest OT" over the 2048-bit MODP group.
"""
from __future__ import annotations

import hashlib
import secrets

import numpy as np

from ..errors import ProtocolError

# RFC 3526 group 14 (2048-bit MODP), safe prime; g = 4 generates the
# prime-order subgroup of quadratic residues
MODP_2048 = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DD"
    "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F"
    "83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497CEA956AE515D2261898FA0510"
    "15728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)
GENERATOR = 4
_ELEM_BYTES = 256
EXP_BITS = 256  # short exponents; standard practice for this group


def _check(m0: np.ndarray, m1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m0 = np.ascontiguousarray(m0, dtype=np.uint8)
    m1 = np.ascontiguousarray(m1, dtype=np.uint8)
    if m0.ndim == 1:
        m0, m1 = m0[:, None], m1[:, None]
    if m0.shape != m1.shape:
        raise ProtocolError(f"OT message pair shapes differ: {m0.shape} vs {m1.shape}")
    return m0, m1


class OTProvider:
    def send(self, party, m0: np.ndarray, m1: np.ndarray) -> None:
        raise NotImplementedError

    def receive(self, party, choice: np.ndarray, width: int) -> np.ndarray:
        raise NotImplementedError

    def transfer_local(self, session, m0, m1, choice) -> np.ndarray:
        """Convenience: run both roles in a ``LocalSession``; returns the receiver's output."""
        m0, m1 = _check(m0, m1)
        choice = np.asarray(choice, dtype=np.uint8)
        if choice.shape[0] != m0.shape[0]:
            raise ProtocolError(f"batch length mismatch: {m0.shape[0]} pairs, {choice.shape[0]} choices")

        def role(party):
            if party.index == 0:
                return self.send(party, m0, m1)
            return self.receive(party, choice, m0.shape[1])

        return session.run(role)[1]


class DealerOT(OTProvider):
    """Random-OT correlations from the dealer, corrected online."""

    def send(self, party, m0, m1):
        m0, m1 = _check(m0, m1)
        n, width = m0.shape
        rot = party.pool.rot(n, width, step="ot")
        e = np.frombuffer(party.recv(n), dtype=np.uint8)
        if np.any(e > 1):
            raise ProtocolError("malformed OT choice correction")
        swap = e[:, None] == 1
        y0 = m0 ^ np.where(swap, rot.k1, rot.k0)
        y1 = m1 ^ np.where(swap, rot.k0, rot.k1)
        party.send(y0.tobytes() + y1.tobytes())

    def receive(self, party, choice, width):
        choice = np.asarray(choice, dtype=np.uint8)
        n = choice.shape[0]
        rot = party.pool.rot(n, width, step="ot")
        party.send((choice ^ rot.c).tobytes())
        buf = party.recv(2 * n * width)
        y = np.frombuffer(buf, dtype=np.uint8).reshape(2, n, width)
        return np.where(choice[:, None] == 1, y[1], y[0]) ^ rot.kc


def _kdf(index: int, point: int, width: int) -> bytes:
    h = hashlib.shake_256()
    h.update(index.to_bytes(8, "little"))
    h.update(point.to_bytes(_ELEM_BYTES, "big"))
    return h.digest(width)


def _elem(buf: bytes, i: int) -> int:
    v = int.from_bytes(buf[i * _ELEM_BYTES:(i + 1) * _ELEM_BYTES], "big")
    if not 1 < v < MODP_2048 - 1:
        raise ProtocolError("OT group element out of range")
    return v


class BaseOT(OTProvider):
    """Chou-Orlandi OT; one group exponentiation pair per transfer."""

    def __init__(self, p: int = MODP_2048, g: int = GENERATOR):
        self.p = p
        self.g = g

    def _secret(self) -> int:
        return secrets.randbits(EXP_BITS) | 1

    def send(self, party, m0, m1):
        m0, m1 = _check(m0, m1)
        n, width = m0.shape
        p = self.p
        a = self._secret()
        A = pow(self.g, a, p)
        party.send(A.to_bytes(_ELEM_BYTES, "big"))
        bufB = party.recv(n * _ELEM_BYTES)
        Aa_inv = pow(pow(A, a, p), -1, p)
        out = bytearray()
        for j in range(n):
            Ba = pow(_elem(bufB, j), a, p)
            k0 = _kdf(j, Ba, width)
            k1 = _kdf(j, Ba * Aa_inv % p, width)
            out += bytes(x ^ y for x, y in zip(m0[j].tobytes(), k0))
            out += bytes(x ^ y for x, y in zip(m1[j].tobytes(), k1))
        party.send(bytes(out))

    def receive(self, party, choice, width):
        choice = np.asarray(choice, dtype=np.uint8)
        n = choice.shape[0]
        p = self.p
        A = _elem(party.recv(_ELEM_BYTES), 0)
        bs = [self._secret() for _ in range(n)]
        payload = bytearray()
        for c, b in zip(choice, bs):
            B = pow(self.g, b, p)
            if c:
                B = B * A % p
            payload += B.to_bytes(_ELEM_BYTES, "big")
        party.send(bytes(payload))
        cts = party.recv(2 * n * width)
        out = np.empty((n, width), dtype=np.uint8)
        for j, (c, b) in enumerate(zip(choice, bs)):
            k = _kdf(j, pow(A, b, p), width)
            off = (2 * j + int(c)) * width
            out[j] = np.frombuffer(bytes(x ^ y for x, y in zip(cts[off:off + width], k)), dtype=np.uint8)
        return out
