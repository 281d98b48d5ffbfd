"""Ordered duplex channels between the two parties, with round/byte metering.

A *round* is one message flight. Counting rules, applied locally by each
party so that both arrive at the same session count:

* ``exchange`` (both parties send, then both receive) is one round.
* ``flush`` of one or more buffered one-way sends is one round.
* the first ``recv`` after any local send or exchange opens one round;
  further receives in the same flight do not.

Payload bytes exclude framing. TCP frames are ``[len: u32 LE][payload]``.
"""
from __future__ import annotations

import hashlib
import queue
import socket
import struct
import threading
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field

from .errors import ProtocolError, TransportError

DEFAULT_TIMEOUT = 600.0
_LEN = struct.Struct("<I")
_CLOSED = object()


@dataclass
class PhaseCounters:
    rounds: int = 0
    bytes_sent: int = 0
    bytes_recv: int = 0
    messages_sent: int = 0
    messages_recv: int = 0
    dealer_bytes: int = 0
    wall_time: float = 0.0


@dataclass
class Metrics:
    """Per-party counters keyed by phase label (``offline`` / ``online``)."""

    phase: str = "online"
    phases: dict = field(default_factory=lambda: defaultdict(PhaseCounters))

    @property
    def current(self) -> PhaseCounters:
        return self.phases[self.phase]

    def total(self, attr: str) -> int:
        return sum(getattr(c, attr) for c in self.phases.values())

    def snapshot(self) -> dict:
        return {
            name: {
                "rounds": c.rounds,
                "bytes_sent": c.bytes_sent,
                "bytes_recv": c.bytes_recv,
                "messages_sent": c.messages_sent,
                "messages_recv": c.messages_recv,
                "dealer_bytes": c.dealer_bytes,
                "wall_time_s": round(c.wall_time, 6),
            }
            for name, c in sorted(self.phases.items())
        }

    @contextmanager
    def in_phase(self, name: str):
        prev = self.phase
        timed_outer = getattr(self, "_depth", 0) > 0
        self._depth = getattr(self, "_depth", 0) + 1
        self.phase = name
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self._depth -= 1
            self.phases[name].wall_time += elapsed
            if timed_outer:
                # nested time belongs to the inner phase only
                self.phases[prev].wall_time -= elapsed
            self.phase = prev


class Channel:
    """Base class; subclasses provide ``_put`` / ``_get`` / ``_shutdown``."""

    def __init__(self, metrics: Metrics | None = None, timeout: float = DEFAULT_TIMEOUT):
        self.metrics = metrics if metrics is not None else Metrics()
        self.timeout = timeout
        self._pending: list[bytes] = []
        self._in_flight = False  # currently inside a peer flight we already counted
        self._digest = hashlib.sha256()
        self.closed = False

    # -- transport hooks -------------------------------------------------
    def _put(self, payload: bytes) -> None:
        raise NotImplementedError

    def _get(self) -> bytes:
        raise NotImplementedError

    def _shutdown(self) -> None:
        raise NotImplementedError

    # -- metering ---------------------------------------------------------
    def _note_sent(self, payload: bytes) -> None:
        c = self.metrics.current
        c.bytes_sent += len(payload)
        c.messages_sent += 1
        self._digest.update(b">" + _LEN.pack(len(payload)) + payload)

    def _note_recv(self, payload: bytes) -> None:
        c = self.metrics.current
        c.bytes_recv += len(payload)
        c.messages_recv += 1
        self._digest.update(b"<" + _LEN.pack(len(payload)) + payload)

    @property
    def transcript_digest(self) -> str:
        return self._digest.copy().hexdigest()

    # -- public API -----------------------------------------------------------
    def send(self, payload: bytes) -> None:
        """Buffer a one-way message; delivered on ``flush``."""
        if self.closed:
            raise TransportError("channel closed")
        self._pending.append(bytes(payload))

    def flush(self) -> None:
        if not self._pending:
            return
        pending, self._pending = self._pending, []
        for payload in pending:
            self._put(payload)
            self._note_sent(payload)
        self.metrics.current.rounds += 1
        self._in_flight = False

    def recv(self) -> bytes:
        if self._pending:
            raise ProtocolError("recv with unflushed sends pending")
        payload = self._get()
        if not self._in_flight:
            self.metrics.current.rounds += 1
            self._in_flight = True
        self._note_recv(payload)
        return payload

    def send_oneway(self, payload: bytes) -> None:
        self.send(payload)
        self.flush()

    def recv_oneway(self) -> bytes:
        return self.recv()

    def exchange(self, payload: bytes) -> bytes:
        """Simultaneous swap: send ours, return the peer's. One round."""
        if self._pending:
            raise ProtocolError("exchange with unflushed one-way sends pending")
        if self.closed:
            raise TransportError("channel closed")
        payload = bytes(payload)
        self._put(payload)
        self._note_sent(payload)
        peer = self._get()
        self._note_recv(peer)
        self.metrics.current.rounds += 1
        self._in_flight = False
        return peer

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self._shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class MemoryChannel(Channel):
    """In-process endpoint backed by two bounded FIFO queues."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, peer_closed: threading.Event,
                 self_closed: threading.Event, metrics: Metrics | None = None,
                 timeout: float = DEFAULT_TIMEOUT):
        super().__init__(metrics, timeout)
        self._inbox = inbox
        self._outbox = outbox
        self._peer_closed = peer_closed
        self._self_closed = self_closed

    @classmethod
    def pair(cls, maxsize: int = 1024, timeout: float = DEFAULT_TIMEOUT,
             metrics: tuple[Metrics, Metrics] | None = None) -> tuple["MemoryChannel", "MemoryChannel"]:
        q01, q10 = queue.Queue(maxsize), queue.Queue(maxsize)
        e0, e1 = threading.Event(), threading.Event()
        m0, m1 = metrics if metrics is not None else (None, None)
        return (cls(q10, q01, e1, e0, m0, timeout), cls(q01, q10, e0, e1, m1, timeout))

    def _put(self, payload: bytes) -> None:
        if self._peer_closed.is_set():
            raise TransportError("peer closed")
        deadline = time.monotonic() + self.timeout
        while True:
            try:
                self._outbox.put(payload, timeout=0.5)
                return
            except queue.Full:
                if self._peer_closed.is_set():
                    raise TransportError("peer closed") from None
                if time.monotonic() > deadline:
                    raise TransportError("send timed out") from None

    def _get(self) -> bytes:
        deadline = time.monotonic() + self.timeout
        while True:
            try:
                item = self._inbox.get(timeout=0.5)
            except queue.Empty:
                if self._peer_closed.is_set():
                    raise TransportError("peer closed") from None
                if time.monotonic() > deadline:
                    raise TransportError("receive timed out") from None
                continue
            if item is _CLOSED:
                raise TransportError("peer closed")
            return item

    def _shutdown(self) -> None:
        self._self_closed.set()
        try:
            self._outbox.put_nowait(_CLOSED)
        except queue.Full:
            pass


class TcpChannel(Channel):
    """Socket endpoint. A writer thread drains sends so that simultaneous
    large exchanges cannot deadlock on full kernel buffers."""

    def __init__(self, sock: socket.socket, metrics: Metrics | None = None,
                 timeout: float = DEFAULT_TIMEOUT):
        super().__init__(metrics, timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.settimeout(timeout)
        self._sock = sock
        self._outq: queue.Queue = queue.Queue()
        self._write_error: BaseException | None = None
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._writer.start()

    @classmethod
    def listen(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT, **kw) -> "TcpChannel":
        with socket.create_server((host, port), reuse_port=False) as srv:
            srv.settimeout(timeout)
            try:
                conn, _ = srv.accept()
            except OSError as e:
                raise TransportError(f"accept on {host}:{port} failed: {e}") from e
        return cls(conn, timeout=timeout, **kw)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT,
                retry_for: float = 30.0, **kw) -> "TcpChannel":
        deadline = time.monotonic() + retry_for
        while True:
            try:
                sock = socket.create_connection((host, port), timeout=timeout)
                return cls(sock, timeout=timeout, **kw)
            except OSError as e:
                if time.monotonic() > deadline:
                    raise TransportError(f"connect to {host}:{port} failed: {e}") from e
                time.sleep(0.05)

    def _write_loop(self) -> None:
        while True:
            item = self._outq.get()
            if item is _CLOSED:
                return
            try:
                self._sock.sendall(_LEN.pack(len(item)) + item)
            except OSError as e:
                self._write_error = e
                return

    def _put(self, payload: bytes) -> None:
        if self._write_error is not None:
            raise TransportError(f"send failed: {self._write_error}")
        self._outq.put(payload)

    def _recv_exact(self, n: int) -> bytes:
        buf = bytearray(n)
        view = memoryview(buf)
        got = 0
        while got < n:
            try:
                k = self._sock.recv_into(view[got:], n - got)
            except OSError as e:
                raise TransportError(f"receive failed: {e}") from e
            if k == 0:
                raise TransportError("peer closed")
            got += k
        return bytes(buf)

    def _get(self) -> bytes:
        (n,) = _LEN.unpack(self._recv_exact(_LEN.size))
        return self._recv_exact(n) if n else b""

    def _shutdown(self) -> None:
        self._outq.put(_CLOSED)
        self._writer.join(timeout=self.timeout)
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


def parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got {text!r}")
    return host, int(port)
