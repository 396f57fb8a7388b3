"""numba and numpy kernel paths must agree."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirfolio import kernels

pytestmark = pytest.mark.skipif(not kernels.NUMBA_AVAILABLE, reason="numba not installed")


@pytest.fixture
def both():
    def run(name, *args):
        nb, npy = kernels.KERNELS[name]
        return nb(*args), npy(*args)

    return run


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 60), st.integers(0, 2**31), st.floats(0.5, 1.0), st.floats(0.0, 1.0))
def test_gae_paths_agree(n, seed, gamma, lam):
    rng = np.random.default_rng(seed)
    r, v = rng.standard_normal(n), rng.standard_normal(n)
    d = (rng.random(n) < 0.1).astype(float)
    a, b = kernels.KERNELS["gae"][0](r, v, 0.3, d, gamma, lam), kernels.KERNELS["gae"][1](r, v, 0.3, d, gamma, lam)
    assert np.allclose(a, b, rtol=0, atol=1e-12)
    a, b = kernels.KERNELS["discounted"][0](r, d, gamma), kernels.KERNELS["discounted"][1](r, d, gamma)
    assert np.allclose(a, b, rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2**31))
def test_drawdown_paths_agree(n, seed):
    rng = np.random.default_rng(seed)
    eq = np.cumprod(1 + 0.02 * rng.standard_normal(n))
    a, b = kernels.KERNELS["drawdown"][0](eq), kernels.KERNELS["drawdown"][1](eq)
    assert np.array_equal(a, b)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**31), st.floats(0.05, 1.0))
def test_projection_paths_agree(n, seed, cap):
    rng = np.random.default_rng(seed)
    v = rng.normal(0, 0.5, n)
    caps = np.concatenate([[np.inf], np.where(rng.random(n - 1) < 0.2, 0.0, cap)])
    a, b = kernels.KERNELS["project_capped"][0](v, caps), kernels.KERNELS["project_capped"][1](v, caps)
    assert np.allclose(a, b, rtol=0, atol=1e-12)
    assert abs(a.sum() - 1) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(1, 6), st.integers(0, 2**31))
def test_paircov_paths_agree(L, N, seed):
    rng = np.random.default_rng(seed)
    x = 0.01 * rng.standard_normal((L, N))
    valid = rng.random((L, N)) < 0.85
    a, b = kernels.KERNELS["pairwise_cov"][0](x, valid), kernels.KERNELS["pairwise_cov"][1](x, valid)
    assert np.allclose(a, b, rtol=1e-9, atol=1e-16)


def test_backend_switch():
    prev = kernels.get_backend()
    try:
        r = np.array([1.0, 2.0, 3.0])
        out = {}
        for name in ("numba", "numpy"):
            kernels.set_backend(name)
            out[name] = kernels.discounted_returns(r, np.zeros(3), 0.5)
        assert np.array_equal(out["numba"], out["numpy"])
        assert np.allclose(out["numpy"], [1 + 1 + 0.75, 2 + 1.5, 3])
        with pytest.raises(ValueError):
            kernels.set_backend("fortran")
    finally:
        kernels.set_backend(prev)


def test_gae_brute_force_both_backends():
    rng = np.random.default_rng(0)
    prev = kernels.get_backend()
    try:
        for name in ("numba", "numpy"):
            kernels.set_backend(name)
            r, v = rng.standard_normal(7), rng.standard_normal(7)
            boot, g, lam = 0.4, 0.97, 0.9
            nxt = np.append(v[1:], boot)
            delta = r + g * nxt - v
            brute = np.array([sum((g * lam) ** k * delta[t + k] for k in range(7 - t)) for t in range(7)])
            assert np.allclose(kernels.gae(r, v, boot, np.zeros(7), g, lam), brute, rtol=0, atol=1e-12)
    finally:
        kernels.set_backend(prev)
