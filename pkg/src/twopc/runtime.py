"""Party context: channel, pools, common and private randomness."""
from __future__ import annotations

import hashlib
import struct
import threading
from dataclasses import dataclass

import numpy as np

from . import ring as R
from .errors import ProtocolError, TransportError
from .preprocessing import Dealer, DealerHub, HubPool, Pool
from .ring import RING64, RingSpec
from .transport import Channel, MemoryChannel, Metrics, TcpChannel


@dataclass
class SessionConfig:
    """What both parties must agree on before running a session."""

    transport: str = "mem"  # "mem" | "tcp"
    address: str = "127.0.0.1:0"
    seed: bytes = bytes(32)
    phase: str = "online"

    @staticmethod
    def parse_seed(text: str | None) -> bytes:
        if not text:
            return bytes(32)
        raw = bytes.fromhex(text)
        if len(raw) != 32:
            raise ValueError("seed must be 32 bytes of hex (64 hex digits)")
        return raw


def _generator(seed: bytes, label: bytes) -> np.random.Generator:
    digest = hashlib.sha256(bytes(seed) + b"|" + label).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))


class Party:
    """One side of a two-party session.

    ``common`` is the theta-seeded stream both parties advance in lockstep
    (shared permutations); ``rng`` is private to this party. With
    ``debug=True`` every shared draw is preceded by a position handshake.
    """

    def __init__(self, index: int, channel: Channel, pool: Pool | None = None, *,
                 seed: bytes = bytes(32), ring: RingSpec = RING64, debug: bool = False,
                 private_seed: bytes | None = None):
        if index not in (0, 1):
            raise ValueError("party index must be 0 or 1")
        self.index = index
        self.channel = channel
        self.metrics: Metrics = channel.metrics
        self.pool = pool
        self.ring = ring
        self.debug = debug
        self.common = _generator(seed, b"theta")
        priv = private_seed if private_seed is not None else bytes(seed) + bytes([index])
        self.rng = _generator(priv, b"private")
        self._common_draws = 0

    # -- phases -----------------------------------------------------------
    def phase(self, name: str):
        return self.metrics.in_phase(name)

    # -- messaging --------------------------------------------------------
    def exchange(self, payload: bytes) -> bytes:
        return self.channel.exchange(payload)

    def send(self, payload: bytes) -> None:
        self.channel.send_oneway(payload)

    def recv(self, nbytes: int | None = None) -> bytes:
        buf = self.channel.recv()
        if nbytes is not None and len(buf) != nbytes:
            raise ProtocolError(f"expected {nbytes} bytes, got {len(buf)}")
        return buf

    def exchange_ring(self, a: np.ndarray, ring: RingSpec | None = None) -> np.ndarray:
        ring = ring or self.ring
        a = np.asarray(a, dtype=ring.dtype)
        peer = self.exchange(R.pack(a, ring))
        return R.unpack(peer, a.shape, ring)

    def reveal(self, a: np.ndarray, ring: RingSpec | None = None) -> np.ndarray:
        """Open an arithmetic sharing to both parties (one round)."""
        a = np.asarray(a, dtype=(ring or self.ring).dtype)
        return a + self.exchange_ring(a, ring)

    def reveal_bits(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=np.uint8)
        peer = R.unpack_u8(self.exchange(R.pack_u8(b)), b.shape)
        return b ^ peer

    # -- common randomness ------------------------------------------------
    def _sync_common(self) -> None:
        if not self.debug:
            return
        mine = struct.pack("<Q", self._common_draws)
        theirs = self.exchange(mine)
        if theirs != mine:
            raise ProtocolError(
                f"common stream desynchronised: {self._common_draws} vs "
                f"{struct.unpack('<Q', theirs)[0]} draws"
            )

    def shared_permutation(self, n: int) -> np.ndarray:
        self._sync_common()
        self._common_draws += 1
        return self.common.permutation(n)

    def shared_permutations(self, rows: int, n: int) -> np.ndarray:
        """``rows`` independent shared permutations of ``range(n)``."""
        self._sync_common()
        self._common_draws += 1
        keys = self.common.random((rows, n))
        return np.argsort(keys, axis=1, kind="stable")

    def close(self) -> None:
        self.channel.close()


def tcp_pair(timeout: float = 60.0) -> tuple[TcpChannel, TcpChannel]:
    """Two loopback-connected TCP endpoints (for tests and ``--both`` mode)."""
    import socket

    srv = socket.create_server(("127.0.0.1", 0))
    port = srv.getsockname()[1]
    box: dict = {}

    def accept():
        conn, _ = srv.accept()
        box["conn"] = conn

    t = threading.Thread(target=accept, daemon=True)
    t.start()
    client = socket.create_connection(("127.0.0.1", port), timeout=timeout)
    t.join(timeout)
    srv.close()
    return TcpChannel(box["conn"], timeout=timeout), TcpChannel(client, timeout=timeout)


class LocalSession:
    """Both parties plus an in-process dealer, driven from one process.

    ``run(fn)`` executes ``fn(party)`` on two threads and returns the pair
    of results. Parties, pools and metrics persist across calls.
    """

    def __init__(self, seed: bytes = bytes(32), *, ring: RingSpec = RING64, transport: str = "mem",
                 debug: bool = False, pools: tuple[Pool, Pool] | None = None,
                 dealer_seed: bytes | None = None, timeout: float = 600.0):
        m0, m1 = Metrics(), Metrics()
        if transport == "mem":
            c0, c1 = MemoryChannel.pair(timeout=timeout, metrics=(m0, m1))
        elif transport == "tcp":
            c0, c1 = tcp_pair(timeout)
            c0.metrics, c1.metrics = m0, m1
        else:
            raise ValueError(f"unknown transport {transport!r}")
        if pools is None:
            hub = DealerHub(Dealer(dealer_seed if dealer_seed is not None else seed, ring))
            pools = (HubPool(hub, 0, m0), HubPool(hub, 1, m1))
        else:
            for p, m in zip(pools, (m0, m1)):
                p.metrics = m
        self.parties = (
            Party(0, c0, pools[0], seed=seed, ring=ring, debug=debug),
            Party(1, c1, pools[1], seed=seed, ring=ring, debug=debug),
        )

    def run(self, fn, *args0, args1=None):
        """Run ``fn(party, *args)``; ``args1`` overrides the arguments for P1."""
        args = (args0, args1 if args1 is not None else args0)
        results: list = [None, None]
        errors: list = [None, None]

        def target(i):
            try:
                results[i] = fn(self.parties[i], *args[i])
            except BaseException as e:  # noqa: BLE001 - re-raised below
                errors[i] = e
                self.parties[i].close()

        threads = [threading.Thread(target=target, args=(i,), daemon=True) for i in (0, 1)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        real = [e for e in errors if e is not None and not isinstance(e, TransportError)]
        if real:
            raise real[0]
        if any(errors):
            raise next(e for e in errors if e is not None)
        return results[0], results[1]

    def run_split(self, fn, x0, x1, *extra):
        """Run ``fn(party, share, *extra)`` with per-party share arguments."""
        return self.run(fn, x0, *extra, args1=(x1, *extra))

    def close(self) -> None:
        for p in self.parties:
            p.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_local(fn, *args, seed: bytes = bytes(32), **kw):
    """One-shot two-party run of ``fn(party, *args)``."""
    with LocalSession(seed, **kw) as sess:
        return sess.run(fn, *args)
