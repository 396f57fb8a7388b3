import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirfolio.env import EnvConfig, PanelAccess, PortfolioEnv, drift_weights, rolling_covariance, write_step_log
from dirfolio.errors import ActionError, ConfigError, RangeError, WindowError
from dirfolio.panel import PanelTensor, build_panel
from dirfolio.simplex import dirichlet_sample, full_mask, mask_and_renormalize

from conftest import long_frame, random_market


def panel_from_returns(r: np.ndarray, mask: np.ndarray | None = None) -> PanelTensor:
    """Panel whose day-t simple returns are r[t] (row 0 ignored)."""
    close = 100 * np.cumprod(1 + r, axis=0)
    if mask is not None:
        close = np.where(mask, close, np.nan)
    df = long_frame(close, {"f": np.ones_like(close)})
    return build_panel(df, ["f"])


def test_config_validation():
    EnvConfig().validate()
    for bad in (dict(window=0), dict(kappa=-1), dict(lambda_risk=0.1, cov_window=1), dict(caps=0.0)):
        with pytest.raises(ConfigError):
            EnvConfig(**bad).validate()
    assert EnvConfig(window=30).warmup == 29
    assert EnvConfig(window=10, lambda_risk=1.0, cov_window=60).warmup == 59


def test_reset():
    p = panel_from_returns(np.zeros((40, 2)))
    env = PortfolioEnv(p, EnvConfig(window=30))
    s = env.reset(29)
    assert s.drifted_weights.tolist() == [1.0, 0.0, 0.0] and s.wealth == 1.0
    with pytest.raises(WindowError):
        env.reset(0)
    with pytest.raises(RangeError):
        env.reset(39)


def test_step_examples():
    r = np.zeros((5, 2))
    r[2, 0] = 0.1
    p = panel_from_returns(r)
    env = PortfolioEnv(p, EnvConfig(window=1, kappa=0.0))
    s = env.reset(1)
    res = env.step(s, [0.0, 1.0, 0.0])
    assert res.reward == pytest.approx(0.09531017980432493, abs=1e-12)
    assert res.next_state.wealth == pytest.approx(1.1, abs=1e-12)
    # all cash after all cash: no trade, zero reward
    res = env.step(env.reset(1), [1.0, 0.0, 0.0])
    assert res.reward == 0.0 and res.info["turnover"] == 0.0

    env = PortfolioEnv(p, EnvConfig(window=1, kappa=5e-4))
    res = env.step(env.reset(2), [0.0, 0.5, 0.5])
    assert res.info["cost_paid"] == pytest.approx(5e-4, abs=1e-15)
    assert res.info["turnover"] == 1.0


def test_step_rejects_infeasible():
    mask = np.ones((5, 2), bool)
    mask[2, 1] = False
    p = panel_from_returns(np.zeros((5, 2)), mask)
    env = PortfolioEnv(p, EnvConfig(window=1, caps=0.6))
    s = env.reset(2)
    with pytest.raises(ActionError, match="masked"):
        env.step(s, [0.5, 0.0, 0.5])
    with pytest.raises(ActionError):
        env.step(s, [0.5, 0.6, 0.0])
    with pytest.raises(ActionError, match="caps"):
        env.step(env.reset(1), [0.0, 0.7, 0.3])
    with pytest.raises(ActionError, match="shape"):
        env.step(env.reset(1), [1.0, 0.0])
    env = PortfolioEnv(p, EnvConfig(window=1, include_cash=False))
    with pytest.raises(ActionError, match="cash"):
        env.step(env.reset(1), [0.5, 0.5, 0.0])


def test_drift_examples():
    assert np.allclose(drift_weights([0, 0.5, 0.5], [0.1, -0.1], [1, 1]), [0, 0.55, 0.45], atol=1e-15)
    w = np.array([0.2, 0.3, 0.5])
    assert np.array_equal(drift_weights(w, [0.0, 0.0], [1, 1]), w)
    assert np.allclose(drift_weights([0.5, 0.5, 0.0], [0.0, 0.0], [0, 1]), [1.0, 0.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31))
def test_drift_on_simplex(n, seed):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(n + 1))
    r = rng.uniform(-0.5, 0.5, n)
    m = rng.random(n) < 0.8
    out = drift_weights(w, r, m)
    assert abs(out.sum() - 1) < 1e-12 and np.all(out >= 0) and np.all(out[1:][~m] == 0)


def test_covariance_examples():
    assert np.allclose(rolling_covariance(np.ones((10, 3)) * 0.01, np.ones(3, bool)), 0.0, rtol=0, atol=1e-30)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(30)
    c = rolling_covariance(np.stack([x, x], 1), np.ones(2, bool))
    v = x.var(ddof=1)
    assert abs(c[0, 1] - v) < 1e-12 and abs(c[0, 0] - v) < 1e-12
    c = rolling_covariance(np.stack([x, x, 2 * x], 1), np.array([True, False, True]))
    assert np.all(c[1] == 0) and np.all(c[:, 1] == 0)
    assert abs(c[0, 2] - 2 * v) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_covariance_psd_after_pairwise_deletion(seed):
    rng = np.random.default_rng(seed)
    L, N = 8, 5
    x = rng.standard_normal((L, N))
    valid = rng.random((L, N)) < 0.6
    c = rolling_covariance(np.where(valid, x, np.nan), np.ones(N, bool), valid)
    assert np.allclose(c, c.T) and np.all(np.diag(c) >= -1e-15)
    w = rng.standard_normal((1000, N))
    assert np.all(np.einsum("ki,ij,kj->k", w, c, w) >= -1e-12)


def random_env(seed, lam=0.0, kappa=5e-4, holes=0.1, caps=None):
    df, feats = random_market(T=70, N=5, F=2, seed=seed, holes=holes)
    p = build_panel(df, feats)
    return PortfolioEnv(p, EnvConfig(window=5, kappa=kappa, lambda_risk=lam, cov_window=10, caps=caps))


def random_episode(env, rng, steps=None):
    s = env.reset(env.config.warmup)
    out = []
    while True:
        m = full_mask(s.mask)
        w = mask_and_renormalize(dirichlet_sample(rng.uniform(0.2, 2, len(m)), rng), m)
        res = env.step(s, w)
        out.append(res)
        s = res.next_state
        if res.done or (steps and len(out) >= steps):
            return out


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 2.0), st.floats(0.0, 0.01))
def test_reward_decomposition(seed, lam, kappa):
    env = random_env(seed % 1000, lam=lam, kappa=kappa)
    for res in random_episode(env, np.random.default_rng(seed)):
        i = res.info
        assert abs(res.reward - (i["gross_log_return"] - kappa * i["turnover"] - lam * i["risk_penalty"])) <= 1e-12
        assert i["risk_penalty"] >= -1e-12
        assert np.all(i["realized_weights"][1:][~env.panel.mask[i["t"]]] <= 1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_log_additivity(seed):
    env = random_env(seed % 1000, kappa=0.0)
    results = random_episode(env, np.random.default_rng(seed))
    total = sum(r.reward for r in results)
    assert abs(total - math.log(results[-1].next_state.wealth)) < 1e-9


def test_buy_and_hold_no_turnover_after_entry():
    env = random_env(3, holes=0.0)
    s = env.reset(env.config.warmup)
    w = np.full(6, 1 / 6)
    results = []
    for _ in range(20):
        res = env.step(s, w)
        results.append(res)
        s = res.next_state
        w = s.drifted_weights
    assert results[0].info["turnover"] > 0
    assert all(r.info["turnover"] < 1e-15 for r in results[1:])


def test_step_determinism():
    a = random_episode(random_env(5), np.random.default_rng(9))
    b = random_episode(random_env(5), np.random.default_rng(9))
    assert [r.reward for r in a] == [r.reward for r in b]
    assert all(np.array_equal(x.next_state.drifted_weights, y.next_state.drifted_weights) for x, y in zip(a, b))


def test_access_accounting():
    df, feats = random_market(T=40, N=3, F=1, seed=0)
    p = build_panel(df, feats)
    acc = PanelAccess(p, limit=30)
    env = PortfolioEnv(p, EnvConfig(window=3), end=29, access=acc)
    s = env.reset(2)
    while True:
        res = env.step(s, [1.0, 0.0, 0.0, 0.0])
        s = res.next_state
        if res.done:
            break
    summ = acc.summary()
    assert summ["test_reads"] == 0 and summ["max_day_read"] == 29
    acc.window(31, 3)
    assert acc.summary()["test_reads"] == 2
    strict = PanelAccess(p, limit=30, strict=True)
    with pytest.raises(RangeError):
        strict.mask(30)


def test_step_log(tmp_path):
    env = random_env(1)
    res = random_episode(env, np.random.default_rng(0), steps=5)
    write_step_log(res, tmp_path / "steps.csv", env.panel.dates)
    df = pd.read_csv(tmp_path / "steps.csv")
    assert len(df) == 5 and "reward" in df.columns
