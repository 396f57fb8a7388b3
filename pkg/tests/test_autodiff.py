import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import dirfolio.autodiff as T
from dirfolio.autodiff import ParamStore, Tensor, adam_step, load_checkpoint, nn, parameter, save_checkpoint
from dirfolio.errors import ConfigError, ShapeError, TrainingError, VersionError


def fd_check(fn, params, h=1e-6, tol=1e-5):
    """Compare tape gradients of scalar fn() against central differences."""
    for p in params:
        p.grad = None
    fn().backward()
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = fn().item()
            flat[k] = old - h
            dn = fn().item()
            flat[k] = old
            fd = (up - dn) / (2 * h)
            assert abs(fd - g.reshape(-1)[k]) <= tol * max(1.0, abs(fd)), (k, fd, g.reshape(-1)[k])


def test_elementwise_examples():
    assert T.softplus(Tensor(0.0)).item() == pytest.approx(math.log(2), abs=1e-15)
    assert T.softplus(Tensor(1000.0)).item() == 1000.0
    assert np.allclose(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    assert np.allclose(T.softmax(Tensor([1000.0, 0.0])).data, [1.0, 0.0])
    assert np.allclose(T.layer_norm(Tensor([3.0, 3.0, 3.0])).data, 0.0)


def test_backward_examples():
    x = parameter(np.array([1.0, 2.0, 3.0]))
    (x * x).sum().backward()
    assert np.array_equal(x.grad, [2.0, 4.0, 6.0])
    a, b = parameter(np.ones(2)), parameter(np.ones(2))
    (a * 3.0).sum().backward()
    assert b.grad is None
    with pytest.raises(ShapeError):
        (a * 1.0).backward()


def test_shared_node_accumulates():
    x = parameter(np.array(2.0))
    y = x * x
    (y + y * x).backward()
    assert x.grad == pytest.approx(2 * 2 + 3 * 4)


def test_no_grad():
    x = parameter(np.ones(3))
    with T.no_grad():
        y = (x * 2).sum()
    assert not y.requires_grad


def test_broadcast_errors():
    with pytest.raises(ShapeError):
        Tensor(np.ones(3)) + Tensor(np.ones(4))
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


@pytest.mark.parametrize(
    "op",
    [
        lambda a, b: (a * b + a / (b * b + 1.0) - a).sum(),
        lambda a, b: (T.tanh(a) * T.sigmoid(b)).sum(),
        lambda a, b: (T.exp(a * 0.3) + T.log(b * b + 1.0)).mean(),
        lambda a, b: T.softplus(a - b).sum(),
        lambda a, b: (T.lgamma(T.softplus(a) + 0.5) + T.digamma(T.softplus(b) + 0.5)).sum(),
        lambda a, b: (T.softmax(a * b, axis=-1) * b).sum(),
        lambda a, b: (T.layer_norm(a + b, axis=-1) * b).sum(),
        lambda a, b: (T.matmul(a, b.transpose(1, 0)) ** 2).sum(),
        lambda a, b: (T.minimum(a, b) + T.maximum(a, b * 0.5) + T.clip(a, -0.3, 0.3)).sum(),
        lambda a, b: (T.where(a.data > 0, a, b) * b).sum(),
        lambda a, b: (T.concat([a, b], axis=0)[1:3] ** 2).sum(),
        lambda a, b: (T.stack([a, b], axis=1).reshape(-1, 4) * 1.5).sum(),
        lambda a, b: (a[:, [0, 2]] * b[:, 1:3]).sum(),
        lambda a, b: (a.sum(axis=0, keepdims=True) * b).sum(),
    ],
)
def test_primitive_gradients(op):
    rng = np.random.default_rng(0)
    a = parameter(rng.standard_normal((2, 4)))
    b = parameter(rng.standard_normal((2, 4)))
    fd_check(lambda: op(a, b), [a, b])


def test_batched_matmul_gradient():
    rng = np.random.default_rng(1)
    a = parameter(rng.standard_normal((2, 3, 4)))
    b = parameter(rng.standard_normal((4, 5)))
    fd_check(lambda: T.tanh(T.matmul(a, b)).sum(), [a, b])


def test_lstm_examples():
    rng = np.random.default_rng(0)
    cell = nn.LSTMCell(3, 4, rng)
    for p in cell.parameters():
        p.data[:] = 0.0
    z = Tensor(np.zeros((1, 4)))
    h, c = cell(Tensor(rng.standard_normal((1, 3))), z, z)
    assert np.array_equal(h.data, np.zeros((1, 4))) and np.array_equal(c.data, np.zeros((1, 4)))
    # forget gate saturated open, input gate shut: the cell state is carried
    cell.bias.data[4:8] = 20.0
    cell.bias.data[0:4] = -20.0
    c0 = Tensor(rng.standard_normal((1, 4)))
    _, c1 = cell(Tensor(rng.standard_normal((1, 3))), z, c0)
    assert np.allclose(c1.data, c0.data, atol=1e-8)
    with pytest.raises(ShapeError):
        cell(Tensor(np.zeros((1, 2))), z, z)


def test_lstm_gradient():
    rng = np.random.default_rng(2)
    cell = nn.LSTMCell(2, 3, rng)
    xs = [Tensor(rng.standard_normal((2, 2))) for _ in range(3)]

    def run():
        h = c = Tensor(np.zeros((2, 3)))
        for x in xs:
            h, c = cell(x, h, c)
        return (h * h).sum() + c.sum()

    fd_check(run, cell.parameters())


def test_mhsa_examples():
    rng = np.random.default_rng(0)
    attn = nn.MultiHeadAttention(4, 2, rng)
    x = Tensor(rng.standard_normal((1, 4)))
    out = attn(x)
    assert np.allclose(attn.last_weights, 1.0)
    v = T.matmul(x, attn.w_v.weight)
    assert np.allclose(out.data, T.matmul(v, attn.w_o.weight).data)
    # identical tokens give identical outputs
    same = Tensor(np.tile(rng.standard_normal(4), (5, 1)))
    y = attn(same).data
    assert np.allclose(y, y[0], atol=1e-14)
    with pytest.raises(ConfigError):
        nn.MultiHeadAttention(5, 2, rng)


def test_mhsa_mask_blocks_values():
    rng = np.random.default_rng(3)
    attn = nn.MultiHeadAttention(4, 2, rng)
    x = rng.standard_normal((1, 3, 4))
    mask = np.zeros((1, 1, 3, 3))
    mask[..., 2] = -1e9
    a = attn(Tensor(x), mask).data
    x2 = x.copy()
    x2[0, 2] = 100 * rng.standard_normal(4)
    b = attn(Tensor(x2), mask).data
    assert np.allclose(a[0, :2], b[0, :2], atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 6))
def test_mhsa_permutation_equivariant(seed, m):
    rng = np.random.default_rng(seed)
    attn = nn.MultiHeadAttention(4, 2, rng)
    x = rng.standard_normal((m, 4))
    perm = rng.permutation(m)
    assert np.allclose(attn(Tensor(x)).data[perm], attn(Tensor(x[perm])).data, atol=1e-12)


def test_encoder_layer_gradient():
    rng = np.random.default_rng(4)
    layer = nn.EncoderLayer(4, 2, rng, ffn_mult=2)
    x = Tensor(rng.standard_normal((2, 3, 4)))
    w = rng.standard_normal((2, 3, 4))
    fd_check(lambda: (layer(x) * w).sum(), layer.parameters())


def test_adam_first_step_and_clip():
    p = parameter(np.zeros(2))
    store = ParamStore({"p": p})
    p.grad = np.array([3.0, -4.0])
    norm = adam_step(store, lr=0.01, clip_norm=None)
    assert norm == 5.0
    # bias-corrected first step moves each coordinate by about lr
    assert np.allclose(p.data, [-0.01, 0.01], atol=1e-8)

    a, b = parameter(np.zeros(2)), parameter(np.zeros(2))
    sa, sb = ParamStore({"p": a}), ParamStore({"p": b})
    a.grad = np.array([3.0, -4.0])
    b.grad = np.array([1.5, -2.0])
    adam_step(sa, lr=0.01, clip_norm=2.5)
    adam_step(sb, lr=0.01, clip_norm=None)
    assert np.allclose(sa.m["p"], sb.m["p"]) and np.allclose(sa.v["p"], sb.v["p"])


def test_adam_zero_grad_is_noop():
    p = parameter(np.array([1.0, 2.0]))
    store = ParamStore({"p": p})
    adam_step(store, lr=0.1)
    assert np.array_equal(p.data, [1.0, 2.0]) and store.step == 1


def test_adam_rejects_nan():
    p = parameter(np.zeros(2))
    store = ParamStore({"p": p})
    p.grad = np.array([np.nan, 0.0])
    with pytest.raises(TrainingError):
        adam_step(store, lr=0.1)
    assert np.array_equal(p.data, [0.0, 0.0]) and store.step == 0


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    layer = nn.EncoderLayer(4, 2, rng)
    store = ParamStore(dict(layer.named_parameters()))
    for p in store.params.values():
        p.grad = rng.standard_normal(p.shape)
    adam_step(store, 1e-3)
    save_checkpoint(tmp_path / "c.ckpt", layer, store, {"tag": "x"})

    other = nn.EncoderLayer(4, 2, np.random.default_rng(9))
    ostore = ParamStore(dict(other.named_parameters()))
    meta = load_checkpoint(tmp_path / "c.ckpt", other, ostore)
    assert meta["tag"] == "x" and ostore.step == 1
    for k, v in layer.state_dict().items():
        assert np.array_equal(other.state_dict()[k], v)
        assert np.array_equal(ostore.m[k], store.m[k]) and np.array_equal(ostore.v[k], store.v[k])
    x = Tensor(rng.standard_normal((3, 4)))
    assert np.array_equal(layer(x).data, other(x).data)

    with pytest.raises(VersionError):
        load_checkpoint(tmp_path / "c.ckpt", nn.EncoderLayer(8, 2, rng))
    (tmp_path / "bad.ckpt").write_bytes(b"nope" * 10)
    with pytest.raises(VersionError):
        load_checkpoint(tmp_path / "bad.ckpt")
