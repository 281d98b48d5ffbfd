"""Offline phase: comparison masks, Beaver triples and other correlations.

Two sources exist. The *trusted dealer* (``Dealer``) samples every kind of
correlated randomness and hands each party its half, either on demand
(``DealerHub`` in-process, ``DealerService`` over TCP) or through per-party
pool files written ahead of time (``FilePool``). Comparison masks can also
be produced by the two parties themselves with OT and a garbled circuit
(``generate_mask_r`` / ``get_wrapped``, wrapped by ``InteractiveMaskPool``).

Every pool charges its traffic to the ``offline`` phase and is consumed
strictly FIFO; both parties must request the same kinds in the same order.
"""
from __future__ import annotations

import hashlib
import struct
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import PoolIOError, PreprocessingUnderrun, ProtocolError
from .ring import RING64, RingSpec, msb, random_ring, wrap

KIND_CODES = {"triple": 1, "triple_p": 2, "mat_triple": 3, "mask": 4, "tensor": 5, "rot": 6, "ottt": 7}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}
MAGIC = b"2PCP"
VERSION = 1
_HDR = struct.Struct("<4sHBIB")


# ---------------------------------------------------------------------------
# share containers (one party's view)
# ---------------------------------------------------------------------------

@dataclass
class Triple:
    """Shares of x, y, z with z = x*y elementwise (ring or Z_p)."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray


@dataclass
class MatTriple:
    u: np.ndarray  # m x n
    v: np.ndarray  # n x w
    z: np.ndarray  # m x w, Z = U @ V


@dataclass
class MaskBatch:
    """``n`` MaskRecords: share of r, Z_p shares of its bits, XOR share of wrap(r0, r1).

    ``bits`` holds unreduced PrimeShares in [0, p], MSB first. A batch is
    single-use; ``consume`` enforces it.
    """

    r: np.ndarray
    bits: np.ndarray
    alpha: np.ndarray
    _used: bool = field(default=False, repr=False)

    def __len__(self) -> int:
        return int(self.r.shape[0])

    def consume(self) -> "MaskBatch":
        if self._used:
            raise ProtocolError("comparison mask reused")
        self._used = True
        return self


@dataclass
class RotSender:
    """Random-OT pads held by the OT sender."""

    k0: np.ndarray  # (n, width) uint8
    k1: np.ndarray


@dataclass
class RotReceiver:
    c: np.ndarray  # (n,) uint8 random choice
    kc: np.ndarray  # (n, width) pad for choice c


@dataclass
class TruthTableShare:
    """One-time truth table share for the 2+2-bit wrap function."""

    offset: np.ndarray  # (n,) uint8 in [0, 4): XOR mask for this party's 2 input bits
    table: np.ndarray  # (n, 16) uint8 bits; index = 4*u0 + u1 of the masked inputs


# ---------------------------------------------------------------------------
# the dealer
# ---------------------------------------------------------------------------

def derive_seed(seed: bytes, label: bytes) -> np.random.SeedSequence:
    digest = hashlib.sha256(bytes(seed) + b"|" + label).digest()
    return np.random.SeedSequence(int.from_bytes(digest, "little"))


class Dealer:
    """Trusted dealer: samples correlations and returns (share_for_P0, share_for_P1)."""

    def __init__(self, seed: bytes = bytes(32), ring: RingSpec = RING64):
        self.ring = ring
        self.rng = np.random.Generator(np.random.PCG64(derive_seed(seed, b"dealer")))

    def generate(self, kind: str, params: tuple):
        fn = getattr(self, f"_gen_{kind}", None)
        if fn is None:
            raise ProtocolError(f"unknown preprocessing kind {kind!r}")
        return fn(*params)

    def _split(self, x):
        s0 = random_ring(self.rng, x.shape, self.ring)
        return s0, x - s0

    def _split_p(self, x):
        p = self.ring.p
        s0 = self.rng.integers(0, p, size=x.shape, dtype=np.uint8)
        return s0, ((x.astype(np.int16) - s0) % p).astype(np.uint8)

    def _gen_triple(self, *shape):
        x = random_ring(self.rng, shape, self.ring)
        y = random_ring(self.rng, shape, self.ring)
        (x0, x1), (y0, y1), (z0, z1) = self._split(x), self._split(y), self._split(x * y)
        return Triple(x0, y0, z0), Triple(x1, y1, z1)

    def _gen_triple_p(self, *shape):
        p = self.ring.p
        x = self.rng.integers(0, p, size=shape, dtype=np.uint8)
        y = self.rng.integers(0, p, size=shape, dtype=np.uint8)
        z = ((x.astype(np.int32) * y) % p).astype(np.uint8)
        (x0, x1), (y0, y1), (z0, z1) = self._split_p(x), self._split_p(y), self._split_p(z)
        return Triple(x0, y0, z0), Triple(x1, y1, z1)

    def _gen_mat_triple(self, m, n, w):
        u = random_ring(self.rng, (m, n), self.ring)
        v = random_ring(self.rng, (n, w), self.ring)
        z = _kernels.matmul_ring(u, v)
        (u0, u1), (v0, v1), (z0, z1) = self._split(u), self._split(v), self._split(z)
        return MatTriple(u0, v0, z0), MatTriple(u1, v1, z1)

    def _gen_mask(self, count):
        ring, p = self.ring, self.ring.p
        # same distribution as the OT-based construction: P0 keeps a in [1, p-1],
        # P1 ends up with p - a + bit
        a = self.rng.integers(1, p, size=(count, ring.bits), dtype=np.uint8)
        bit = self.rng.integers(0, 2, size=(count, ring.bits), dtype=np.uint8)
        b = (p - a.astype(np.int16) + bit).astype(np.uint8)
        r0 = _kernels.eq9_share(a, 0, p, ring.dtype)
        r1 = _kernels.eq9_share(b, 1, p, ring.dtype)
        alpha = wrap(r0, r1)
        a0 = self.rng.integers(0, 2, size=count, dtype=np.uint8)
        return MaskBatch(r0, a, a0), MaskBatch(r1, b, alpha ^ a0)

    def _gen_rot(self, n, width):
        k0 = self.rng.integers(0, 256, size=(n, width), dtype=np.uint8)
        k1 = self.rng.integers(0, 256, size=(n, width), dtype=np.uint8)
        c = self.rng.integers(0, 2, size=n, dtype=np.uint8)
        kc = np.where(c[:, None] == 1, k1, k0)
        return RotSender(k0, k1), RotReceiver(c, kc)

    def _gen_ottt(self, count):
        from .crypto.gc import WRAP_TABLE

        r = self.rng.integers(0, 4, size=count, dtype=np.uint8)
        s = self.rng.integers(0, 4, size=count, dtype=np.uint8)
        u = np.arange(4, dtype=np.uint8)
        # T[u0, u1] = f(x0 = u0 ^ r, x1 = u1 ^ s), x0 = (m0, mhat0), x1 = (m1, mhat1)
        x0 = u[None, :, None] ^ r[:, None, None]
        x1 = u[None, None, :] ^ s[:, None, None]
        m0, mh0 = x0 >> 1, x0 & 1
        m1, mh1 = x1 >> 1, x1 & 1
        full = WRAP_TABLE[m0, m1, mh0, mh1].reshape(count, 16)
        t0 = self.rng.integers(0, 2, size=(count, 16), dtype=np.uint8)
        return TruthTableShare(r, t0), TruthTableShare(s, t0 ^ full)


# ---------------------------------------------------------------------------
# serialisation (dealer link and pool files share it)
# ---------------------------------------------------------------------------

def _le(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<")).tobytes()


def _from(buf: memoryview, off: int, dtype, shape) -> tuple[np.ndarray, int]:
    dtype = np.dtype(dtype).newbyteorder("<")
    n = int(np.prod(shape, dtype=np.int64))
    end = off + n * dtype.itemsize
    if end > len(buf):
        raise ProtocolError("truncated preprocessing payload")
    arr = np.frombuffer(buf[off:end], dtype=dtype).astype(dtype.newbyteorder("=")).reshape(shape)
    return arr, end


def share_to_bytes(obj) -> bytes:
    if isinstance(obj, Triple):
        return _le(obj.x) + _le(obj.y) + _le(obj.z)
    if isinstance(obj, MatTriple):
        return _le(obj.u) + _le(obj.v) + _le(obj.z)
    if isinstance(obj, MaskBatch):
        return _le(obj.r) + _le(obj.bits) + _le(obj.alpha)
    if isinstance(obj, RotSender):
        return _le(obj.k0) + _le(obj.k1)
    if isinstance(obj, RotReceiver):
        return _le(obj.c) + _le(obj.kc)
    if isinstance(obj, TruthTableShare):
        return _le(obj.offset) + _le(obj.table)
    raise TypeError(type(obj))


def share_from_bytes(kind: str, params: tuple, party: int, buf: bytes, ring: RingSpec = RING64):
    mv = memoryview(buf)
    off = 0
    if kind == "triple":
        x, off = _from(mv, off, ring.dtype, params)
        y, off = _from(mv, off, ring.dtype, params)
        z, off = _from(mv, off, ring.dtype, params)
        out = Triple(x, y, z)
    elif kind == "triple_p":
        x, off = _from(mv, off, np.uint8, params)
        y, off = _from(mv, off, np.uint8, params)
        z, off = _from(mv, off, np.uint8, params)
        out = Triple(x, y, z)
    elif kind == "mat_triple":
        m, n, w = params
        u, off = _from(mv, off, ring.dtype, (m, n))
        v, off = _from(mv, off, ring.dtype, (n, w))
        z, off = _from(mv, off, ring.dtype, (m, w))
        out = MatTriple(u, v, z)
    elif kind == "mask":
        (count,) = params
        r, off = _from(mv, off, ring.dtype, (count,))
        bits, off = _from(mv, off, np.uint8, (count, ring.bits))
        alpha, off = _from(mv, off, np.uint8, (count,))
        out = MaskBatch(r, bits, alpha)
    elif kind == "rot":
        n, width = params
        if party == 0:
            k0, off = _from(mv, off, np.uint8, (n, width))
            k1, off = _from(mv, off, np.uint8, (n, width))
            out = RotSender(k0, k1)
        else:
            c, off = _from(mv, off, np.uint8, (n,))
            kc, off = _from(mv, off, np.uint8, (n, width))
            out = RotReceiver(c, kc)
    elif kind == "ottt":
        (count,) = params
        o, off = _from(mv, off, np.uint8, (count,))
        t, off = _from(mv, off, np.uint8, (count, 16))
        out = TruthTableShare(o, t)
    else:
        raise ProtocolError(f"unknown preprocessing kind {kind!r}")
    if off != len(buf):
        raise ProtocolError(f"{kind} payload has {len(buf) - off} trailing bytes")
    return out


# ---------------------------------------------------------------------------
# pools
# ---------------------------------------------------------------------------

class Pool:
    """Party-side source of correlated randomness."""

    party: int
    metrics = None

    def request(self, kind: str, params: tuple, step: str = ""):
        raise NotImplementedError

    def _charge(self, obj) -> None:
        if self.metrics is not None:
            nbytes = len(share_to_bytes(obj))
            self.metrics.phases["offline"].dealer_bytes += nbytes

    # convenience wrappers
    def triple(self, shape, step: str = "") -> Triple:
        return self.request("triple", tuple(int(s) for s in np.atleast_1d(shape)) if shape != () else (), step)

    def triple_p(self, shape, step: str = "") -> Triple:
        return self.request("triple_p", tuple(int(s) for s in shape), step)

    def mat_triple(self, m: int, n: int, w: int, step: str = "") -> MatTriple:
        return self.request("mat_triple", (int(m), int(n), int(w)), step)

    def masks(self, count: int, step: str = "") -> MaskBatch:
        return self.request("mask", (int(count),), step)

    def rot(self, n: int, width: int, step: str = ""):
        return self.request("rot", (int(n), int(width)), step)

    def ottt(self, count: int, step: str = "") -> TruthTableShare:
        return self.request("ottt", (int(count),), step)


class DealerHub:
    """In-process dealer endpoint shared by both parties.

    The k-th request of P0 and the k-th request of P1 must match; whichever
    party arrives first triggers generation and parks the peer's half.
    """

    def __init__(self, dealer: Dealer):
        self.dealer = dealer
        self._lock = threading.Lock()
        self._count = [0, 0]
        self._parked: dict[int, tuple] = {}

    def request(self, party: int, kind: str, params: tuple):
        with self._lock:
            seq = self._count[party]
            self._count[party] += 1
            if seq in self._parked:
                key, share = self._parked.pop(seq)
                if key != (kind, params):
                    raise ProtocolError(
                        f"dealer request #{seq} desynchronised: P{party} asked {kind}{params}, "
                        f"peer asked {key[0]}{key[1]}"
                    )
                return share
            shares = self.dealer.generate(kind, params)
            self._parked[seq] = ((kind, params), shares[1 - party])
            return shares[party]


class HubPool(Pool):
    def __init__(self, hub: DealerHub, party: int, metrics=None):
        self.hub = hub
        self.party = party
        self.metrics = metrics

    def request(self, kind, params, step=""):
        obj = self.hub.request(self.party, kind, tuple(params))
        self._charge(obj)
        return obj


def _encode_request(kind: str, params: tuple) -> bytes:
    return struct.pack(f"<BB{len(params)}I", KIND_CODES[kind], len(params), *params)


def _decode_request(buf: bytes) -> tuple[str, tuple]:
    code, n = struct.unpack_from("<BB", buf)
    params = struct.unpack_from(f"<{n}I", buf, 2)
    return KIND_NAMES[code], tuple(params)


class DealerLink(Pool):
    """Party side of a dealer reached over its own channel (e.g. TCP)."""

    def __init__(self, channel, party: int, ring: RingSpec = RING64, metrics=None):
        self.channel = channel
        self.party = party
        self.ring = ring
        self.metrics = metrics
        channel.send_oneway(struct.pack("<B", party))

    def request(self, kind, params, step=""):
        self.channel.send_oneway(_encode_request(kind, tuple(params)))
        buf = self.channel.recv()
        if buf[:1] == b"E":
            raise ProtocolError(buf[1:].decode())
        obj = share_from_bytes(kind, tuple(params), self.party, buf[1:], self.ring)
        if self.metrics is not None:
            self.metrics.phases["offline"].dealer_bytes += len(buf) - 1
        return obj


class DealerService:
    """Serves a ``DealerHub`` to two remote parties, one channel each."""

    def __init__(self, dealer: Dealer):
        self.hub = DealerHub(dealer)
        self._threads: list[threading.Thread] = []
        self.errors: list[BaseException] = []

    def _serve_one(self, channel) -> None:
        from .errors import TransportError

        try:
            party = struct.unpack("<B", channel.recv())[0]
            while True:
                try:
                    req = channel.recv()
                except TransportError:
                    return
                kind, params = _decode_request(req)
                try:
                    obj = self.hub.request(party, kind, params)
                    channel.send_oneway(b"S" + share_to_bytes(obj))
                except ProtocolError as e:
                    channel.send_oneway(b"E" + str(e).encode())
        except BaseException as e:  # surfaced through .errors
            self.errors.append(e)
        finally:
            channel.close()

    def serve(self, channels) -> None:
        for ch in channels:
            t = threading.Thread(target=self._serve_one, args=(ch,), daemon=True)
            t.start()
            self._threads.append(t)

    def join(self, timeout=None) -> None:
        for t in self._threads:
            t.join(timeout)


# ---------------------------------------------------------------------------
# pool files
# ---------------------------------------------------------------------------

def write_section(fh, kind: str, count: int, dims: tuple, payload: bytes, tag: str | None = None) -> None:
    fh.write(_HDR.pack(MAGIC, VERSION, KIND_CODES[kind], count, len(dims)))
    fh.write(struct.pack(f"<{len(dims)}I", *dims))
    if kind == "tensor":
        t = (tag or "").encode()
        fh.write(struct.pack("<B", len(t)) + t)
    fh.write(payload)


def _section_payload_size(kind: str, count: int, dims: tuple, ring: RingSpec) -> int:
    w = ring.nbytes
    if kind == "triple":
        return 3 * count * w
    if kind == "triple_p":
        return 3 * count
    if kind == "mat_triple":
        m, n, v = dims
        return count * w * (m * n + n * v + m * v)
    if kind == "mask":
        (l,) = dims
        return count * (w + l + 1)
    if kind == "tensor":
        return w * int(np.prod(dims, dtype=np.int64))
    if kind == "rot":
        (width,) = dims
        return count * 2 * width  # same size for sender (k0,k1) and receiver (c,kc)+pad
    if kind == "ottt":
        return count * 17
    raise PoolIOError(f"unknown kind {kind}")


def read_sections(path, ring: RingSpec = RING64):
    """Yield (kind, count, dims, tag, payload) for every section of a pool file."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise PoolIOError(f"cannot read {path}: {e}") from e
    off = 0
    while off < len(data):
        if len(data) - off < _HDR.size:
            raise PoolIOError(f"{path}: truncated header at byte {off}")
        magic, version, code, count, ndim = _HDR.unpack_from(data, off)
        if magic != MAGIC:
            raise PoolIOError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise PoolIOError(f"{path}: unsupported version {version}")
        off += _HDR.size
        dims = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        kind = KIND_NAMES.get(code)
        if kind is None:
            raise PoolIOError(f"{path}: unknown kind code {code}")
        tag = None
        if kind == "tensor":
            (tl,) = struct.unpack_from("<B", data, off)
            tag = data[off + 1: off + 1 + tl].decode()
            off += 1 + tl
        size = _section_payload_size(kind, count, dims, ring)
        if kind == "rot":  # party dependent; stored length-prefixed
            (size,) = struct.unpack_from("<I", data, off)
            off += 4
        payload = data[off: off + size]
        if len(payload) != size:
            raise PoolIOError(f"{path}: truncated {kind} payload")
        off += size
        yield kind, count, tuple(dims), tag, payload


def dealer_generate(dealer: Dealer, kind: str, params: tuple, count: int):
    """Pool-file view of the dealer: ``count`` items of ``kind``.

    Returns ``(dims, share0, share1)`` where shares are the concatenated
    party payloads. Element-wise kinds are flat pools (dims ``()``) so any
    tensor shape can be carved out of them later.
    """
    if kind in ("triple", "triple_p"):
        s0, s1 = dealer.generate(kind, (count,))
        return (), s0, s1
    if kind == "mask":
        s0, s1 = dealer.generate("mask", (count,))
        return (dealer.ring.bits,), s0, s1
    if kind == "mat_triple":
        parts = [dealer.generate("mat_triple", tuple(params)) for _ in range(count)]
        return tuple(params), [p[0] for p in parts], [p[1] for p in parts]
    if kind == "rot":
        (width,) = params
        s0, s1 = dealer.generate("rot", (count, width))
        return (width,), s0, s1
    if kind == "ottt":
        s0, s1 = dealer.generate("ottt", (count,))
        return (), s0, s1
    raise PoolIOError(f"cannot pool kind {kind!r}")


def write_pool_files(directory, dealer: Dealer, plan: list[tuple[str, tuple, int]]) -> list[Path]:
    """Write ``pool_p0.2pcp`` / ``pool_p1.2pcp`` for a list of (kind, params, count)."""
    directory = Path(directory)
    paths = [directory / "pool_p0.2pcp", directory / "pool_p1.2pcp"]
    try:
        directory.mkdir(parents=True, exist_ok=True)
        fhs = [open(p, "wb") for p in paths]
    except OSError as e:
        raise PoolIOError(f"cannot write pools in {directory}: {e}") from e
    try:
        for kind, params, count in plan:
            dims, s0, s1 = dealer_generate(dealer, kind, params, count)
            for fh, s in zip(fhs, (s0, s1)):
                if kind == "mat_triple":
                    payload = b"".join(share_to_bytes(x) for x in s)
                else:
                    payload = share_to_bytes(s)
                if kind == "rot":
                    payload = struct.pack("<I", len(payload)) + payload
                write_section(fh, kind, count, dims, payload)
    finally:
        for fh in fhs:
            fh.close()
    return paths


class FilePool(Pool):
    """FIFO consumer of one party's pool file."""

    def __init__(self, path, party: int, ring: RingSpec = RING64, metrics=None):
        self.party = party
        self.ring = ring
        self.metrics = metrics
        self.path = Path(path)
        self._flat: dict[str, list] = {}
        self._mats: dict[tuple, deque] = {}
        for kind, count, dims, _tag, payload in read_sections(path, ring):
            if kind == "mat_triple":
                q = self._mats.setdefault(dims, deque())
                size = len(payload) // max(count, 1)
                for i in range(count):
                    q.append(share_from_bytes(kind, dims, party, payload[i * size:(i + 1) * size], ring))
            elif kind in ("triple", "triple_p", "ottt"):
                self._append_flat(kind, share_from_bytes(kind, (count,), party, payload, ring))
            elif kind == "mask":
                self._append_flat(kind, share_from_bytes(kind, (count,), party, payload, ring))
            elif kind == "rot":
                self._append_flat(kind, share_from_bytes(kind, (count,) + dims, party, payload, ring))
        self._cursor = {k: 0 for k in self._flat}

    def _append_flat(self, kind, obj) -> None:
        prev = self._flat.get(kind)
        if prev is None:
            self._flat[kind] = obj
            return
        fields = [f for f in vars(obj) if not f.startswith("_")]
        for f in fields:
            setattr(prev, f, np.concatenate([getattr(prev, f), getattr(obj, f)]))

    def available(self, kind: str, params: tuple = ()) -> int:
        if kind == "mat_triple":
            return len(self._mats.get(tuple(params), ()))
        obj = self._flat.get(kind)
        if obj is None:
            return 0
        first = next(v for k, v in vars(obj).items() if not k.startswith("_"))
        return int(first.shape[0]) - self._cursor[kind]

    def request(self, kind, params, step=""):
        params = tuple(params)
        if kind == "mat_triple":
            q = self._mats.get(params)
            if not q:
                raise PreprocessingUnderrun(kind + str(params), 1, 0, step)
            obj = q.popleft()
            self._charge(obj)
            return obj
        if kind in ("triple", "triple_p"):
            n = int(np.prod(params, dtype=np.int64)) if params else 1
            shape = params
        elif kind == "rot":
            n, width = params
            shape = None
        else:
            (n,) = params
            shape = None
        have = self.available(kind)
        if n > have:
            raise PreprocessingUnderrun(kind, n, have, step)
        src = self._flat[kind]
        lo = self._cursor[kind]
        self._cursor[kind] = lo + n
        out = {}
        for f, v in vars(src).items():
            if f.startswith("_"):
                continue
            piece = v[lo:lo + n]
            out[f] = piece.reshape(shape) if shape is not None else piece.copy()
        obj = type(src)(**out)
        self._charge(obj)
        return obj


class InteractiveMaskPool(Pool):
    """Masks generated jointly by the parties (OT + garbled wrap); other kinds delegated."""

    def __init__(self, party_ref, base: Pool, ot=None, gc=None):
        self._party_ref = party_ref
        self.base = base
        self.party = base.party
        self.metrics = base.metrics
        self.ot = ot
        self.gc = gc

    def request(self, kind, params, step=""):
        if kind != "mask":
            return self.base.request(kind, params, step)
        party = self._party_ref()
        (count,) = params
        with party.phase("offline"):
            mask = generate_mask_r(party, count, self.ot)
            mask.alpha = get_wrapped(party, mask, self.gc)
        return mask


# ---------------------------------------------------------------------------
# interactive mask generation
# ---------------------------------------------------------------------------

def generate_mask_r(party, count: int, ot=None) -> MaskBatch:
    """Joint sampling of ``count`` masks r with Z_p bit shares.

    Per bit, P0 draws a in [1, p-1] and offers the shuffled pair
    {p - a, p - a + 1}; P1 picks one by OT. The integer sum of the shares
    is p + bit. Returned ``alpha`` is empty until ``get_wrapped`` runs.
    """
    from .crypto.ot import DealerOT

    ot = ot or DealerOT()
    ring, p = party.ring, party.ring.p
    n = count * ring.bits
    if party.index == 0:
        a = party.rng.integers(1, p, size=n, dtype=np.uint8)
        swap = party.rng.integers(0, 2, size=n, dtype=np.uint8)
        lo = (p - a.astype(np.int16)).astype(np.uint8)
        hi = lo + 1
        m0 = np.where(swap == 1, hi, lo)[:, None]
        m1 = np.where(swap == 1, lo, hi)[:, None]
        ot.send(party, m0, m1)
        shares = a.reshape(count, ring.bits)
    else:
        choice = party.rng.integers(0, 2, size=n, dtype=np.uint8)
        got = ot.receive(party, choice, 1)
        shares = got[:, 0].reshape(count, ring.bits)
    r = _kernels.eq9_share(shares, party.index, p, ring.dtype)
    return MaskBatch(r, shares, np.zeros(count, dtype=np.uint8))


def get_wrapped(party, mask: MaskBatch, gc=None) -> np.ndarray:
    """XOR share of wrap(r0, r1) via the 4-input wrap circuit."""
    from .crypto.gc import GarbledWrap

    gc = gc or GarbledWrap()
    m = msb(mask.r)
    mhat = ((mask.bits[:, 0].astype(np.int16) + party.index) % 2).astype(np.uint8)
    return gc.evaluate(party, m, mhat)
