import gzip
import struct

import numpy as np
import pytest
from conftest import DATA_DIR

from twopc.errors import DimensionError, PoolIOError
from twopc.nn.checkpoint import checkpoint_path, load_checkpoint, save_checkpoint
from twopc.nn.layers import Conv2d, Dense, Flatten, col2im, im2col
from twopc.nn.mnist import Dataset, load_mnist, read_idx
from twopc.nn.networks import NETWORKS, Network, get_network
from twopc.nn.ops import FixedOps, FloatOps, SecureOps
from twopc.nn.train import (TrainConfig, accuracy, batch_order, fixed_baseline, float_baseline, owner_shares,
                            reconstruct_params, train_party)
from twopc.ring import SCALE, decode, encode, to_signed
from twopc.runtime import LocalSession

FL, FX = FloatOps(), FixedOps()


@pytest.fixture(scope="module")
def mnist():
    return load_mnist(DATA_DIR, "train"), load_mnist(DATA_DIR, "test")


def secure(fn, *, seed=bytes(32)):
    """Run ``fn(party, ops)`` on both parties; return party 0's result."""
    with LocalSession(seed) as sess:
        return sess.run(lambda p: fn(p, SecureOps(p)))[0]


def reveal_tree(party, tree):
    return [{k: party.reveal(v) for k, v in d.items()} for d in tree]


def ulps(a, b):
    return int(np.abs(to_signed(np.asarray(a) - np.asarray(b))).max())


# -- im2col / convolution -------------------------------------------------------------------------

def direct_conv(x, w, k, stride, pad):
    n, c, h, wd = x.shape
    c_out = w.shape[1]
    wk = w.T.reshape(c_out, c, k, k)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh, ow = (h + 2 * pad - k) // stride + 1, (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, c_out, oh, ow))
    for i in range(oh):
        for j in range(ow):
            patch = xp[:, :, i * stride:i * stride + k, j * stride:j * stride + k]
            out[:, :, i, j] = np.einsum("nckl,ockl->no", patch, wk)
    return out


@pytest.mark.parametrize("k,stride,pad", [(1, 1, 0), (3, 1, 1), (5, 2, 2), (5, 1, 0)])
def test_conv_matches_direct(rng, k, stride, pad):
    conv = Conv2d(2, 3, k, stride, pad)
    x = rng.normal(size=(2, 2, 9, 9))
    p = conv.init(rng, 1.0)
    y, _ = conv.forward(FL, p, x)
    np.testing.assert_allclose(y, direct_conv(x, p["W"], k, stride, pad), atol=1e-12)


@pytest.mark.parametrize("k,stride,pad", [(3, 1, 1), (5, 2, 2), (2, 2, 0)])
def test_col2im_is_adjoint(rng, k, stride, pad):
    x = rng.normal(size=(2, 3, 8, 8))
    cols, _, _ = im2col(x, k, stride, pad)
    c = rng.normal(size=cols.shape)
    assert np.isclose((cols * c).sum(), (x * col2im(c, x.shape, k, stride, pad)).sum())


def test_conv_one_by_one_and_zero_filter(rng):
    conv = Conv2d(1, 1, 1)
    x = rng.normal(size=(1, 1, 4, 4))
    y, _ = conv.forward(FL, {"W": np.array([[2.5]]), "b": np.zeros(1)}, x)
    np.testing.assert_allclose(y, 2.5 * x)
    y, _ = conv.forward(FL, {"W": np.zeros((1, 1)), "b": np.zeros(1)}, x)
    assert not y.any()


def test_network_d_conv_secure_matches_oracle(mnist):
    conv = get_network("D").layers[0]
    p = {k: FX.param(v) for k, v in conv.init(np.random.default_rng(0), 2 ** -3).items()}
    x = FX.input(mnist[0].pixels()[:1])
    ref, _ = conv.forward(FX, p, x)

    def run(party, ops):
        y, _ = conv.forward(ops, owner_shares([p], party.index)[0], ops.input(mnist[0].pixels()[:1]))
        return party.reveal(y)
    assert ulps(secure(run), ref) <= 1


def test_conv_shape_errors():
    with pytest.raises(DimensionError):
        Conv2d(2, 3, 3).forward(FL, Conv2d(2, 3, 3).init(np.random.default_rng(0), 1), np.zeros((1, 1, 5, 5)))
    with pytest.raises(DimensionError):
        Dense(4, 2).forward(FL, Dense(4, 2).init(np.random.default_rng(0), 1), np.zeros((1, 5)))


# -- network definitions --------------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(NETWORKS))
def test_networks_compose(name):
    net = get_network(name)
    params = net.init_params(0)
    u, _ = net.forward(FL, params, np.zeros((2, 1, 28, 28)))
    assert u.shape == (2, 10)
    for p in params:
        if "W" in p:
            assert np.abs(p["W"]).max() <= 2 ** -3 and not p["b"].any()


def test_network_a_dims():
    dims = [(layer.n_in, layer.n_out) for layer in get_network("A").layers if isinstance(layer, Dense)]
    assert dims == [(784, 128), (128, 128), (128, 10)]


def test_network_errors():
    with pytest.raises(ValueError):
        get_network("Z")
    with pytest.raises(DimensionError):
        Network("bad", [Flatten(), Dense(784, 7)], lr_log2=-5)
    net = get_network("A")
    with pytest.raises(DimensionError):
        net.forward(FL, net.init_params(0), np.zeros((1, 1, 20, 20)))


@pytest.mark.parametrize("name,shift", [("A", 14), ("B", 12), ("C", 12), ("D", 12)])
def test_update_shift(name, shift):
    assert get_network(name).update_shift(128) == shift
    with pytest.raises(ValueError):
        get_network(name).update_shift(100)


def test_init_is_seeded():
    a, b, c = (get_network("D").init_params(s) for s in (1, 1, 2))
    assert np.array_equal(a[0]["W"], b[0]["W"]) and not np.array_equal(a[0]["W"], c[0]["W"])


# -- SGD --------------------------------------------------------------------------------------------

def test_sgd_shift_examples():
    w = encode(np.array([1.0, 0.75]))
    grad = encode(np.array([128 * 2 ** 7, 0.0]))
    np.testing.assert_array_equal(FX.sgd(w, grad, 14), encode(np.array([0.0, 0.75])))

    def run(party, ops):
        w_sh = ops.input(np.array([1.0, 0.75]))
        g_sh = ops.input(np.array([128 * 2 ** 7, 0.0]))
        return party.reveal(ops.sgd(w_sh, g_sh, 14))
    assert ulps(secure(run), encode(np.array([0.0, 0.75]))) <= 1


# -- forward / backward parity -------------------------------------------------------------------

def test_zero_weights_give_uniform_softmax(mnist):
    net = get_network("A")
    zeros = [{k: np.zeros(v.shape, np.uint64) for k, v in p.items()} for p in net.init_params(0)]

    def run(party, ops):
        u, _ = net.forward(ops, zeros, ops.input(mnist[0].pixels()[:3]))
        return ops.reveal(ops.softmax(u))
    np.testing.assert_allclose(secure(run), 0.1, atol=1e-3)


def test_identity_net_passes_input_through(rng):
    net = Network("I", [Flatten(), Dense(10, 10)], lr_log2=-5, input_shape=(1, 1, 10))
    params = [{}, {"W": FX.param(np.eye(10)), "b": FX.param(np.zeros(10))}]
    x = rng.normal(size=(4, 1, 1, 10))

    def run(party, ops):
        u, _ = net.forward(ops, owner_shares(params, party.index), ops.input(x))
        return party.reveal(u)
    assert ulps(secure(run), encode(x.reshape(4, 10))) <= 1


def test_network_a_logits_match_oracle(mnist):
    net = get_network("A")
    params = net.to_backend(FX, net.init_params(3))
    x = mnist[1].pixels()[:1]
    ref, _ = net.forward(FX, params, FX.input(x))

    def run(party, ops):
        u, _ = net.forward(ops, owner_shares(params, party.index), ops.input(x))
        return party.reveal(u)
    assert ulps(secure(run), ref) <= SCALE >> 8


def test_perfect_prediction_has_no_error():
    u = encode(np.array([[20.0, 0, 0, 0, 0, 0, 0, 0, 0, 0]]))
    y = np.eye(10)[[0]]

    def run(party, ops):
        uu = u if party.index == 0 else np.zeros_like(u)
        return ops.reveal(ops.softmax(uu) - ops.input(y))
    assert np.abs(secure(run)).max() < 1e-3


def _secure_grads(net, params, x, y):
    def run(party, ops):
        p = owner_shares(params, party.index)
        u, caches = net.forward(ops, p, ops.input(x))
        prob = ops.softmax(u)
        return reveal_tree(party, net.backward(ops, p, caches, prob - ops.input(y)))
    return secure(run)


def test_network_a_batch_gradients_match_oracle(mnist):
    net = get_network("A")
    params = net.to_backend(FX, net.init_params(0))
    x, y = mnist[0].pixels()[:4], mnist[0].one_hot()[:4]
    u, caches = net.forward(FX, params, FX.input(x))
    ref = net.backward(FX, params, caches, FX.softmax(u) - FX.input(y))
    got = _secure_grads(net, params, x, y)
    for g_ref, g in zip(ref, got):
        for k in g_ref:
            assert ulps(g[k], g_ref[k]) <= SCALE >> 7


def test_gradient_check_finite_differences(mnist):
    """Secure gradients against central differences of the float loss.

    Coordinates are drawn among entries with |grad| >= 2^-5, where the
    comparison measures the gradient rather than the exp approximation.
    """
    net = get_network("A")
    pf = net.init_params(0)
    x, y = mnist[0].pixels()[:4], mnist[0].one_hot()[:4]
    got = _secure_grads(net, net.to_backend(FX, pf), x, y)

    def loss(params):
        u, _ = net.forward(FL, params, x)
        z = np.exp(u - u.max(axis=1, keepdims=True))
        return -np.sum(y * np.log(z / z.sum(axis=1, keepdims=True)))

    cands = [(i, tuple(idx)) for i, g in enumerate(got) if "W" in g
             for idx in np.argwhere(np.abs(decode(g["W"])) >= 2 ** -5)]
    pick = np.random.default_rng(7).choice(len(cands), 10, replace=False)
    eps = 1e-4
    for j in pick:
        i, idx = cands[j]
        hi = [{k: v.copy() for k, v in d.items()} for d in pf]
        lo = [{k: v.copy() for k, v in d.items()} for d in pf]
        hi[i]["W"][idx] += eps
        lo[i]["W"][idx] -= eps
        fd = (loss(hi) - loss(lo)) / (2 * eps)
        assert abs(decode(got[i]["W"][idx]) - fd) <= 2 ** -4 * abs(fd), (i, idx)


def test_train_step_parity_network_d(mnist):
    net = get_network("D")
    params = net.to_backend(FX, net.init_params(0))
    x, y = mnist[0].pixels()[:8], mnist[0].one_hot()[:8]
    ref, _ = net.train_step(FX, params, FX.input(x), FX.input(y), 8)

    def run(party, ops):
        new, _ = net.train_step(ops, owner_shares(params, party.index), ops.input(x), ops.input(y), 8)
        return reveal_tree(party, new)
    for a, b in zip(secure(run), ref):
        for k in b:
            assert ulps(a[k], b[k]) <= SCALE >> 7


# -- training helpers -------------------------------------------------------------------------

def test_batch_order():
    a = batch_order(1000, 128, 0, 5)
    assert len(a) == 7 and all(len(b) == 128 for b in a)
    assert np.array_equal(np.concatenate(a), np.concatenate(batch_order(1000, 128, 0, 5)))
    assert not np.array_equal(a[0], batch_order(1000, 128, 1, 5)[0])
    assert np.array_equal(batch_order(256, 128, 0, 5, shuffle=False)[1], np.arange(128, 256))


def test_fixed_and_float_oracles_agree(mnist):
    cfg = TrainConfig(network="A", epochs=1, train_samples=1000)
    train, test = mnist[0].subset(1000), mnist[1]
    _, fh = float_baseline(cfg, train, test)
    _, xh = fixed_baseline(cfg, train, test)
    assert abs(fh[0] - xh[0]) <= 0.01


def test_share_reconstruct_params(mnist):
    net = get_network("D")
    params = net.to_backend(FX, net.init_params(0))
    with LocalSession(bytes(32)) as sess:
        out = sess.run(lambda p: reconstruct_params(p, owner_shares(params, p.index)))[1]
    assert all(np.array_equal(out[i][k], params[i][k]) for i in range(len(params)) for k in params[i])
    assert accuracy(net, FX, params, mnist[1].subset(50)) <= 1.0


@pytest.mark.slow
def test_loss_decreases_over_first_50_batches(mnist):
    """Float loss of the reconstructed secure weights falls over 50 batches."""
    net = get_network("A")
    cfg = TrainConfig(network="A", epochs=2, train_samples=4000)
    init = net.to_backend(FX, net.init_params(cfg.seed))
    probe = mnist[1].subset(500)
    x, y = probe.pixels(), probe.one_hot()
    losses = []

    def track(party):
        def cb(epoch, step, params, prob, idx):
            plain = reconstruct_params(party, params)
            if party.index == 0 and len(losses) < 50:
                u, _ = net.forward(FL, [{k: decode(v) for k, v in d.items()} for d in plain], x)
                z = np.exp(u - u.max(axis=1, keepdims=True))
                losses.append(float(-np.mean(np.sum(y * np.log(z / z.sum(axis=1, keepdims=True)), axis=1))))
        return cb

    with LocalSession(bytes(32)) as sess:
        sess.run(lambda p: train_party(p, net, owner_shares(init, p.index), mnist[0] if p.index == 0 else None,
                                       cfg, 4000, None, track(p)))
    assert len(losses) == 50
    assert np.mean(losses[-10:]) < np.mean(losses[:10])


# -- MNIST / checkpoints ---------------------------------------------------------------------------

def test_mnist_subset_shapes(mnist):
    train, test = mnist
    assert train.images.shape == (4000, 28, 28) and len(test) == 1000
    px = train.pixels()
    assert px.shape == (4000, 1, 28, 28) and 0 <= px.min() and px.max() <= 1
    assert set(np.unique(train.labels)) == set(range(10))
    assert encode(px.max()) <= encode(1.0)


def _idx(magic_dims, payload):
    magic, dims = magic_dims
    return struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + payload


def test_read_idx_plain_and_gzip(tmp_path):
    raw = _idx((0x00000803, (2, 3, 3)), bytes(range(18)))
    (tmp_path / "a.idx").write_bytes(raw)
    (tmp_path / "a.idx.gz").write_bytes(gzip.compress(raw))
    for name in ("a.idx", "a.idx.gz"):
        arr = read_idx(tmp_path / name)
        assert arr.shape == (2, 3, 3) and arr[1, 2, 2] == 17


@pytest.mark.parametrize("raw", [b"\x00\x00", _idx((0x00000D03, (2,)), b"ab"), _idx((0x00000801, (5,)), b"abc")])
def test_read_idx_rejects(tmp_path, raw):
    (tmp_path / "bad").write_bytes(raw)
    with pytest.raises(PoolIOError):
        read_idx(tmp_path / "bad")


def test_dataset_count_mismatch():
    with pytest.raises(DimensionError):
        Dataset(np.zeros((3, 28, 28), np.uint8), np.zeros(2, np.uint8))


def test_missing_mnist(tmp_path):
    with pytest.raises(PoolIOError):
        load_mnist(tmp_path)


def test_checkpoint_roundtrip(tmp_path):
    net = get_network("D")
    params = net.to_backend(FX, net.init_params(0))
    for party in (0, 1):
        path = save_checkpoint(tmp_path / "m", "D", owner_shares(params, party), party)
        assert path == checkpoint_path(tmp_path / "m", party)
    back = load_checkpoint(tmp_path / "m", net, 0)
    assert all(np.array_equal(back[i][k], params[i][k]) for i in range(len(params)) for k in params[i])
    with pytest.raises(DimensionError):
        load_checkpoint(tmp_path / "m", get_network("A"), 0)
    with pytest.raises(PoolIOError):
        load_checkpoint(tmp_path / "missing", net, 0)
