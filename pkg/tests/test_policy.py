import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirfolio.autodiff import Tensor
from dirfolio.errors import ConfigError, DegenerateMaskError, ShapeError
from dirfolio.policy import PolicyConfig, act, build_policy
from dirfolio.simplex import dirichlet_log_pdf


def windows(rng, B=1, W=5, N=4, F=2):
    return rng.standard_normal((B, W, N, F))


def test_config_validation():
    for bad in (dict(d=10, heads=4), dict(epsilon_alpha=0), dict(temporal_encoder="gru"), dict(pool="max"), dict(L_time=0)):
        with pytest.raises(ConfigError):
            PolicyConfig(**bad).validate()


def test_output_shapes_and_positivity(tiny_policy):
    x = windows(np.random.default_rng(0), B=3)
    out = tiny_policy(x, np.ones((3, 4), bool))
    assert out.alpha.shape == (3, 5) and out.value.shape == (3,)
    assert np.all(out.alpha.data >= 1e-3)
    with pytest.raises(ShapeError):
        tiny_policy(windows(np.random.default_rng(0), F=3), np.ones((1, 4), bool))


def test_shared_temporal_encoder(tiny_policy):
    rng = np.random.default_rng(1)
    x = windows(rng)
    x[0, :, 3] = x[0, :, 0]
    H = tiny_policy.encode_temporal(x).data
    assert np.allclose(H[0, 0], H[0, 3], atol=1e-14)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    pol = build_policy(PolicyConfig(d=8, heads=2, L_cross=2), 2, seed=seed % 100)
    x = windows(rng, N=5)
    mask = rng.random((1, 5)) < 0.7
    mask[0, 0] = True
    perm = rng.permutation(5)
    a = pol(x, mask)
    b = pol(x[:, :, perm], mask[:, perm])
    assert np.allclose(a.alpha.data[0, 1:][perm], b.alpha.data[0, 1:], atol=1e-10)
    assert abs(a.alpha.data[0, 0] - b.alpha.data[0, 0]) < 1e-10
    assert abs(a.value.data[0] - b.value.data[0]) < 1e-10


def test_masked_asset_is_isolated(tiny_policy):
    rng = np.random.default_rng(2)
    x = windows(rng)
    mask = np.array([[True, True, False, True]])
    a = tiny_policy(x, mask)
    x[0, :, 2] = 50 * rng.standard_normal((5, 2))
    b = tiny_policy(x, mask)
    keep = [0, 1, 2, 4]
    assert np.allclose(a.alpha.data[0, keep], b.alpha.data[0, keep], atol=1e-12)
    assert np.allclose(a.value.data, b.value.data, atol=1e-12)
    with pytest.raises(DegenerateMaskError):
        tiny_policy(x, np.zeros((1, 4), bool))


def test_market_vector():
    pol = build_policy(PolicyConfig(d=8, heads=2, K=3), 2, seed=0)
    x = windows(np.random.default_rng(0))
    m = np.ones((1, 4), bool)
    base = pol(x, m)
    assert np.allclose(pol(x, m, np.zeros(3)).alpha.data, base.alpha.data)
    assert not np.allclose(pol(x, m, np.ones(3)).alpha.data, base.alpha.data)


def test_head_examples(tiny_policy):
    for lin in (tiny_policy.actor_cash, tiny_policy.actor_asset):
        lin.weight.data[:] = 0.0
        lin.bias.data[:] = 0.0
    out = tiny_policy(windows(np.random.default_rng(0)), np.ones((1, 4), bool))
    assert np.allclose(out.alpha.data, math.log(2) + 1e-3, atol=1e-15)


def test_value_head_is_linear(tiny_policy):
    rng = np.random.default_rng(3)
    g1, g2 = rng.standard_normal((1, 8)), rng.standard_normal((1, 8))
    v = lambda g: tiny_policy.value_head(Tensor(g)).data[0]
    b = tiny_policy.critic.bias.data[0]
    assert abs((v(g1 + g2) - b) - (v(g1) - b) - (v(g2) - b)) < 1e-12


def test_no_cross_layers():
    pol = build_policy(PolicyConfig(d=8, heads=2, L_cross=0), 2, seed=0)
    out = pol(windows(np.random.default_rng(0)), np.ones((1, 4), bool))
    assert out.attention_weights == [] and out.alpha.shape == (1, 5)


def test_asset_chunking_matches():
    x = windows(np.random.default_rng(4), B=2, N=5)
    m = np.ones((2, 5), bool)
    full = build_policy(PolicyConfig(d=8, heads=2), 2, seed=3)(x, m)
    chunked = build_policy(PolicyConfig(d=8, heads=2, asset_chunk=3), 2, seed=3)(x, m)
    assert np.allclose(full.alpha.data, chunked.alpha.data, atol=1e-13)


@pytest.mark.parametrize("pool", ["last", "mean"])
def test_transformer_encoder(pool):
    pol = build_policy(PolicyConfig(d=8, heads=2, temporal_encoder="transformer", pool=pool), 2, seed=0)
    for W in (1, 6):
        out = pol(windows(np.random.default_rng(0), W=W), np.ones((1, 4), bool))
        assert np.all(np.isfinite(out.alpha.data))


def test_every_parameter_gets_gradient(tiny_policy):
    x = windows(np.random.default_rng(5), B=2)
    out = tiny_policy(x, np.ones((2, 4), bool))
    (out.alpha.log().sum() + out.value.sum()).backward()
    for name, p in tiny_policy.named_parameters():
        assert p.grad is not None and np.any(p.grad != 0), name


def test_act_determinism_and_feasibility(tiny_policy):
    x = windows(np.random.default_rng(6))[0]
    mask = np.array([True, False, True, True])
    a = act(tiny_policy, x, mask, rng=np.random.default_rng(1))
    b = act(tiny_policy, x, mask, rng=np.random.default_rng(1))
    assert np.array_equal(a.weights, b.weights) and a.log_prob == b.log_prob
    assert a.weights[2] == 0 and abs(a.weights.sum() - 1) < 1e-12
    assert a.log_prob == pytest.approx(dirichlet_log_pdf(a.alpha, a.pre_mask_point))
    m = act(tiny_policy, x, mask, mode="mean")
    assert np.allclose(m.pre_mask_point, a.alpha / a.alpha.sum())
    c = act(tiny_policy, x, mask, rng=np.random.default_rng(1), caps=0.3)
    assert np.all(c.weights[1:] <= 0.3 + 1e-12)
    n = act(tiny_policy, x, mask, rng=np.random.default_rng(1), include_cash=False)
    assert n.weights[0] == 0
    with pytest.raises(ValueError):
        act(tiny_policy, x, mask)


def test_act_batched(tiny_policy):
    x = windows(np.random.default_rng(7), B=4)
    res = act(tiny_policy, x, np.ones((4, 4), bool), rng=np.random.default_rng(0))
    assert res.weights.shape == (4, 5) and res.log_prob.shape == (4,) and res.value.shape == (4,)
