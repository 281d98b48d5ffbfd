"""Command-line entry point: dealer pools, two-party training/inference, benchmarks.

Exit codes: 0 ok, 2 usage, 3 protocol, 4 preprocessing underrun, 5 I/O,
6 config mismatch, 7 transport.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import socket
import sys
import time
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConfigMismatch, PoolIOError, ProtocolError, TwoPCError
from .preprocessing import (Dealer, DealerHub, DealerLink, DealerService, FilePool, HubPool, Pool,
                            read_sections, write_pool_files)
from .ring import RING64, encode, share
from .runtime import LocalSession, Party, SessionConfig
from .transport import Metrics, TcpChannel, parse_endpoint

REPORT_VERSION = 1


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def load_config(path: str | None) -> tuple[dict, Path]:
    if path is None:
        return {}, Path.cwd()
    p = Path(path)
    try:
        cfg = json.loads(p.read_text())
    except OSError as e:
        raise PoolIOError(f"cannot read config {p}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigMismatch(f"config {p} is not valid JSON: {e}") from e
    return cfg, p.resolve().parent


def train_config(cfg: dict, base: Path, full_run: bool = False):
    from .nn.train import TrainConfig

    fields = TrainConfig.__dataclass_fields__
    unknown = set(cfg) - set(fields) - {"transport", "pools", "dealer", "listen", "connect", "seed_hex"}
    if unknown:
        raise ConfigMismatch(f"unknown config keys: {sorted(unknown)}")
    tc = TrainConfig(**{k: v for k, v in cfg.items() if k in fields})
    if tc.data_dir is not None and not Path(tc.data_dir).is_absolute():
        tc.data_dir = str((base / tc.data_dir).resolve())
    if full_run:
        tc.epochs = max(tc.epochs, 15)
        tc.train_samples = None
        tc.test_samples = None
    return tc


def config_hash(tc, seed: bytes) -> str:
    blob = json.dumps(tc.to_dict(), sort_keys=True).encode() + seed
    return hashlib.sha256(blob).hexdigest()


def handshake(party: Party, digest: str) -> None:
    with party.phase("setup"):
        theirs = party.exchange(bytes.fromhex(digest)).hex()
    if theirs != digest:
        raise ConfigMismatch(f"config hash mismatch: mine {digest[:16]}..., peer {theirs[:16]}...")


# ---------------------------------------------------------------------------
# sessions
# ---------------------------------------------------------------------------

def run_both(args, seed: bytes, fn):
    """Both parties in this process; ``fn(party)`` runs on each."""
    pools = None
    if args.pools:
        pools = tuple(FilePool(Path(args.pools) / f"pool_p{i}.2pcp", i) for i in (0, 1))
    sess = LocalSession(seed, transport=args.transport, pools=pools)
    try:
        results = sess.run(fn)
    finally:
        sess.close()
    return results, sess.parties


def run_single(args, seed: bytes, fn):
    """This process is one party; the peer is reached over TCP."""
    idx = int(args.party)
    if args.transport != "tcp":
        raise ConfigMismatch("a single-party run needs --transport tcp")
    if not (args.pools or args.dealer):
        raise ConfigMismatch("a single-party run needs --pools DIR or --dealer host:port")
    metrics = Metrics()
    if idx == 0:
        if not args.listen:
            raise ConfigMismatch("party 0 needs --listen host:port")
        host, port = parse_endpoint(args.listen)
        channel = TcpChannel.listen(host, port, metrics=metrics)
    else:
        if not args.connect:
            raise ConfigMismatch("party 1 needs --connect host:port")
        host, port = parse_endpoint(args.connect)
        channel = TcpChannel.connect(host, port, metrics=metrics)
    if args.pools:
        pool: Pool = FilePool(Path(args.pools) / f"pool_p{idx}.2pcp", idx, metrics=metrics)
    elif args.dealer:
        dh, dp = parse_endpoint(args.dealer)
        pool = DealerLink(TcpChannel.connect(dh, dp), idx, metrics=metrics)
    party = Party(idx, channel, pool, seed=seed)
    try:
        result = fn(party)
    finally:
        party.close()
        if isinstance(pool, DealerLink):
            pool.channel.close()
    out = [None, None]
    out[idx] = result
    parties = [None, None]
    parties[idx] = party
    return tuple(out), tuple(parties)


def party_report(p: Party | None) -> dict | None:
    if p is None:
        return None
    return {"metrics": p.metrics.snapshot(), "transcript_sha256": p.channel.transcript_digest}


def write_report(report: dict, path: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if path:
        try:
            Path(path).write_text(text + "\n")
        except OSError as e:
            raise PoolIOError(f"cannot write report {path}: {e}") from e
    print(text)


def params_digest(params) -> str:
    h = hashlib.sha256()
    for layer in params:
        for k in sorted(layer):
            h.update(k.encode())
            h.update(np.ascontiguousarray(layer[k], dtype="<u8").tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

class RecordingPool(Pool):
    """Wraps a pool and logs every request, for sizing file pools."""

    def __init__(self, base: Pool):
        self.base = base
        self.party = base.party
        self.metrics = base.metrics
        self.log: list[tuple[str, tuple]] = []

    def request(self, kind, params, step=""):
        self.log.append((kind, tuple(params)))
        return self.base.request(kind, params, step)


def plan_from_log(log) -> list[tuple[str, tuple, int]]:
    counts = {"triple": 0, "triple_p": 0, "mask": 0}
    mats: dict[tuple, int] = {}
    for kind, params in log:
        if kind in ("triple", "triple_p"):
            counts[kind] += int(np.prod(params, dtype=np.int64)) if params else 1
        elif kind == "mask":
            counts["mask"] += params[0]
        elif kind == "mat_triple":
            mats[params] = mats.get(params, 0) + 1
    plan = [(k, (), v) for k, v in counts.items()]
    plan += [("mat_triple", shape, n) for shape, n in mats.items()]
    return plan


def rehearse(job: str, tc, seed: bytes) -> list:
    """Run a job with zero inputs and record its preprocessing demand."""
    from .nn.mnist import Dataset
    from .nn.train import infer_party, owner_shares, train_party

    net = tc.build()
    n = tc.train_samples or 60000
    blank = Dataset(np.zeros((n, 28, 28), np.uint8), np.zeros(n, np.uint8))
    hub = DealerHub(Dealer(seed))
    rec = (RecordingPool(HubPool(hub, 0)), RecordingPool(HubPool(hub, 1)))
    zeros = [{k: np.zeros(v.shape, np.uint64) for k, v in p.items()} for p in net.init_params(0)]
    sess = LocalSession(seed, pools=rec)
    if job == "train":
        sess.run(lambda p: train_party(p, net, owner_shares(zeros, p.index), blank if p.index == 0 else None,
                                       tc, n))
    else:
        count = tc.test_samples or 1
        sess.run(lambda p: infer_party(p, net, zeros, blank.images if p.index == 0 else None, count))
    sess.close()
    return rec[0].log


def cmd_dealer_gen(args) -> int:
    seed = SessionConfig.parse_seed(args.seed)
    plan: list[tuple[str, tuple, int]] = []
    if args.config:
        cfg, base = load_config(args.config)
        tc = train_config(cfg, base, args.full_run)
        plan = plan_from_log(rehearse(args.job, tc, seed))
    plan += [("mask", (), args.masks), ("triple", (), args.triples), ("triple_p", (), args.triples_p)]
    for item in args.mat or []:
        shape, _, count = item.partition(":")
        m, n, w = (int(v) for v in shape.split(","))
        plan.append(("mat_triple", (m, n, w), int(count or 1)))
    plan = [(k, s, c) for k, s, c in plan if c > 0 or k == "mask"]
    paths = write_pool_files(args.out, Dealer(seed), plan)
    inventory = {}
    for path in paths:
        items = {}
        for kind, count, dims, _tag, _payload in read_sections(path):
            key = kind if kind != "mat_triple" else f"mat_triple{list(dims)}"
            items[key] = items.get(key, 0) + count
        inventory[path.name] = items
    print(json.dumps({"pools": inventory}, indent=2, sort_keys=True))
    return 0


def cmd_dealer_serve(args) -> int:
    seed = SessionConfig.parse_seed(args.seed)
    host, port = parse_endpoint(args.listen)
    service = DealerService(Dealer(seed))
    with socket.create_server((host, port)) as srv:
        srv.settimeout(args.timeout)
        chans = []
        for _ in range(2):
            conn, _addr = srv.accept()
            chans.append(TcpChannel(conn))
    service.serve(chans)
    service.join()
    if service.errors:
        raise service.errors[0]
    return 0


def _load_data(tc):
    from .nn.mnist import load_mnist

    if tc.data_dir is None:
        raise PoolIOError("config needs a data_dir with MNIST IDX files")
    train = load_mnist(tc.data_dir, "train")
    test = load_mnist(tc.data_dir, "test")
    if tc.train_samples:
        train = train.subset(tc.train_samples)
    if tc.test_samples:
        test = test.subset(tc.test_samples)
    return train, test


def cmd_train(args) -> int:
    from .nn.checkpoint import save_checkpoint
    from .nn.ops import FixedOps
    from .nn.train import float_baseline, owner_shares, reconstruct_params, train_party

    cfg, base = load_config(args.config)
    tc = train_config(cfg, base, args.full_run)
    seed = SessionConfig.parse_seed(args.seed)
    digest = config_hash(tc, seed)
    train, test = _load_data(tc)
    net = tc.build()
    init = net.to_backend(FixedOps(), net.init_params(tc.seed))
    start = time.perf_counter()

    def job(party):
        handshake(party, digest)
        data = train if party.index == 0 else None
        params, hist = train_party(party, net, owner_shares(init, party.index), data, tc, len(train), test)
        plain = reconstruct_params(party, params)
        if args.save_model:
            save_checkpoint(args.save_model, net.name, params, party.index)
        return hist, plain

    run = run_both if args.party == "both" else run_single
    results, parties = run(args, seed, job)
    hist, plain = next(r for r in results if r is not None)
    if hist and hist[0] is None:
        hist = []  # only party 0 evaluates
    report = {
        "version": REPORT_VERSION,
        "command": "train",
        "config": tc.to_dict(),
        "config_hash": digest,
        "seed": seed.hex(),
        "party": args.party,
        "transport": args.transport,
        "accuracy_per_epoch": hist,
        "final_weights_sha256": params_digest(plain),
        "wall_time_s": round(time.perf_counter() - start, 3),
        "parties": {str(i): party_report(p) for i, p in enumerate(parties) if p is not None},
        "kernels": _kernels.BACKEND,
    }
    if args.baseline:
        _, fhist = float_baseline(tc, train, test)
        report["float_oracle_accuracy_per_epoch"] = fhist
    write_report(report, args.report)
    return 0


def cmd_infer(args) -> int:
    from .nn.checkpoint import load_checkpoint
    from .nn.mnist import read_idx
    from .nn.train import infer_party

    cfg, base = load_config(args.config)
    tc = train_config(cfg, base)
    seed = SessionConfig.parse_seed(args.seed)
    digest = config_hash(tc, seed)
    net = tc.build()
    if args.images:
        images = read_idx(args.images)
    else:
        _, test = _load_data(tc)
        images = test.images
    images = images[: args.count] if args.count else images
    count = len(images)

    def job(party):
        handshake(party, digest)
        params = load_checkpoint(args.model, net, party.index)
        return infer_party(party, net, params, images if party.index == 0 else None, count)

    run = run_both if args.party == "both" else run_single
    results, parties = run(args, seed, job)
    labels, per_query = next(r for r in results if r is not None)
    n = max(len(per_query), 1)
    report = {
        "version": REPORT_VERSION,
        "command": "infer",
        "config_hash": digest,
        "seed": seed.hex(),
        "labels": [int(v) for v in labels],
        "per_query_mean": {k: sum(q[k] for q in per_query) / n for k in ("rounds", "bytes_sent", "bytes_recv", "seconds")},
        "parties": {str(i): party_report(p) for i, p in enumerate(parties) if p is not None},
    }
    write_report(report, args.report)
    return 0


def _bench_rows(args, seed):
    from . import arith, compare

    rng = np.random.default_rng(int.from_bytes(seed[:8], "little"))
    sess = LocalSession(seed, transport=args.transport)
    rows = []

    def measure(name, fn0, fn1, n_ops):
        p0, p1 = sess.parties
        before = [(p.metrics.phases["online"].rounds, p.metrics.phases["online"].bytes_sent) for p in (p0, p1)]
        t0 = time.perf_counter()
        sess.run(lambda p: (fn0 if p.index == 0 else fn1)(p))
        dt = time.perf_counter() - t0
        rounds = p0.metrics.phases["online"].rounds - before[0][0]
        sent = sum(p.metrics.phases["online"].bytes_sent - b[1] for p, b in zip((p0, p1), before))
        rows.append({"op": name, "n": n_ops, "rounds_per_op": rounds / n_ops,
                     "bytes_per_op": sent / n_ops, "seconds_per_op": dt / n_ops})

    n = args.n
    suite = args.suite
    if suite == "checkzero":
        c = rng.integers(0, RING64.p, size=(n, 64), dtype=np.uint8)
        c0 = rng.integers(0, RING64.p, size=(n, 64), dtype=np.uint8)
        c1 = ((c.astype(int) - c0) % RING64.p).astype(np.uint8)

        def loop(shares):
            def f(p):
                with p.phase("online"):
                    for i in range(n):
                        compare.check_zero(p, shares[i:i + 1])
            return f
        measure("checkzero", loop(c0), loop(c1), n)
        row = rows[-1]
        if row["rounds_per_op"] != 3 or row["bytes_per_op"] > 224:
            raise ProtocolError(f"checkzero budget violated: {row}")
    elif suite == "compare":
        a0, a1 = share(encode(rng.normal(0, 100, n)), rng)

        def loop(shares):
            def f(p):
                with p.phase("online"):
                    for i in range(n):
                        compare.compare_positive(p, shares[i:i + 1])
            return f
        measure("compare", loop(a0), loop(a1), n)
    elif suite in ("exp", "div"):
        if suite == "exp":
            x0, x1 = share(encode(rng.uniform(-10, 0, n)), rng)
            op = arith.exp_pwl
            args_ = ((x0,), (x1,))
        else:
            b = rng.uniform(2 ** -6, 2 ** 6, n)
            a0, a1 = share(encode(rng.uniform(-4, 4, n) * b), rng)
            b0, b1 = share(encode(b), rng)
            op = arith.divide
            args_ = ((a0, b0), (a1, b1))

        def batch(i):
            def f(p):
                with p.phase("online"):
                    op(p, *args_[i])
            return f
        measure(f"{suite} (batched x{n})", batch(0), batch(1), 1)
    elif suite == "matmul":
        d = args.dim
        A = share(encode(rng.uniform(-1, 1, (d, d))), rng)
        B = share(encode(rng.uniform(-1, 1, (d, d))), rng)

        def loop(i):
            def f(p):
                with p.phase("online"):
                    for _ in range(n):
                        arith.matmul_fixed(p, A[i], B[i])
            return f
        measure(f"matmul {d}x{d}", loop(0), loop(1), n)
    sess.close()
    return rows


def cmd_bench(args) -> int:
    seed = SessionConfig.parse_seed(args.seed)
    if args.suite == "kernels":
        from .bench import kernel_table

        rows = kernel_table(repeats=max(args.n, 1))
    else:
        rows = _bench_rows(args, seed)
    for r in rows:
        print("  ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    if args.report:
        write_report({"version": REPORT_VERSION, "command": "bench", "suite": args.suite, "rows": rows},
                     args.report)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _session_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config shared by both parties")
    p.add_argument("--party", choices=["0", "1", "both"], default="both")
    p.add_argument("--transport", choices=["mem", "tcp"], default="mem")
    p.add_argument("--listen", help="host:port (party 0, tcp)")
    p.add_argument("--connect", help="host:port of party 0 (party 1, tcp)")
    p.add_argument("--pools", help="directory holding pool_p0.2pcp / pool_p1.2pcp")
    p.add_argument("--dealer", help="host:port of a running dealer-serve")
    p.add_argument("--report", help="write the JSON run report here as well")
    p.add_argument("--seed", help="32-byte session seed as hex")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twopc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("dealer-gen", help="write per-party preprocessing pool files")
    g.add_argument("--out", required=True)
    g.add_argument("--masks", type=int, default=0)
    g.add_argument("--triples", type=int, default=0)
    g.add_argument("--triples-p", type=int, default=0)
    g.add_argument("--mat", action="append", metavar="M,N,W[:COUNT]")
    g.add_argument("--config", help="size the pools for a job described by this config")
    g.add_argument("--job", choices=["train", "infer"], default="train")
    g.add_argument("--full-run", action="store_true")
    g.add_argument("--seed")
    g.set_defaults(func=cmd_dealer_gen)

    s = sub.add_parser("dealer-serve", help="serve dealer correlations to two parties over TCP")
    s.add_argument("--listen", required=True)
    s.add_argument("--seed")
    s.add_argument("--timeout", type=float, default=600.0)
    s.set_defaults(func=cmd_dealer_serve)

    t = sub.add_parser("train", help="secure training")
    _session_flags(t)
    t.add_argument("--save-model", metavar="PREFIX", help="write per-party checkpoint shares")
    t.add_argument("--baseline", action="store_true", help="also report the float oracle's accuracy")
    t.add_argument("--full-run", action="store_true",
                   help="full MNIST for 15 epochs (needs the complete dataset in data_dir)")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="secure inference with a saved model")
    _session_flags(i)
    i.add_argument("--model", required=True, metavar="PREFIX")
    i.add_argument("--images", help="IDX image file (default: the config's test set)")
    i.add_argument("--count", type=int, default=1)
    i.set_defaults(func=cmd_infer)

    b = sub.add_parser("bench", help="protocol microbenchmarks")
    b.add_argument("suite", choices=["compare", "checkzero", "exp", "div", "matmul", "kernels"])
    b.add_argument("-n", type=int, default=100)
    b.add_argument("--dim", type=int, default=128)
    b.add_argument("--transport", choices=["mem", "tcp"], default="mem")
    b.add_argument("--seed")
    b.add_argument("--report")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TwoPCError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return PoolIOError.exit_code
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
