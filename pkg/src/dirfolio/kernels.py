"""Hot numeric loops with a numba path and a pure-numpy fallback.

The backend is chosen at import time from the ``DIRFOLIO_NUMBA`` environment
variable (``0``/``false``/``off`` forces numpy) and can be switched at runtime
with :func:`set_backend`. Both paths implement the same contracts; the test
suite checks them against each other.
"""
from __future__ import annotations

import os
from typing import Callable

import numpy as np

try:  # pragma: no cover - import guard
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if args and callable(args[0]) and len(args) == 1 and not kwargs:
            return args[0]
        return lambda f: f


def _env_wants_numba() -> bool:
    flag = os.environ.get("DIRFOLIO_NUMBA", "1").strip().lower()
    return flag not in {"0", "false", "off", "no"}


_BACKEND = "numba" if (NUMBA_AVAILABLE and _env_wants_numba()) else "numpy"


def get_backend() -> str:
    return _BACKEND


def set_backend(name: str) -> None:
    """Select ``"numba"`` or ``"numpy"`` for all kernels."""
    global _BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    _BACKEND = name


# ---------------------------------------------------------------------------
# advantage estimation / discounted sums


def _gae_numpy(rewards, values, bootstrap, dones, gamma, lam):
    n = rewards.shape[0]
    adv = np.empty(n)
    next_values = np.append(values[1:], bootstrap)
    nonterminal = 1.0 - dones
    deltas = rewards + gamma * next_values * nonterminal - values
    running = 0.0
    for t in range(n - 1, -1, -1):
        running = deltas[t] + gamma * lam * nonterminal[t] * running
        adv[t] = running
    return adv


@njit(cache=True)
def _gae_numba(rewards, values, bootstrap, dones, gamma, lam):
    n = rewards.shape[0]
    adv = np.empty(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        next_v = bootstrap if t == n - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_v * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv


def _discounted_numpy(rewards, dones, gamma):
    n = rewards.shape[0]
    out = np.empty(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        running = rewards[t] + gamma * (1.0 - dones[t]) * running
        out[t] = running
    return out


@njit(cache=True)
def _discounted_numba(rewards, dones, gamma):
    n = rewards.shape[0]
    out = np.empty(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        running = rewards[t] + gamma * (1.0 - dones[t]) * running
        out[t] = running
    return out


def gae(rewards, values, bootstrap: float, dones, gamma: float, lam: float) -> np.ndarray:
    """Backward GAE recursion. ``dones[t] = 1`` cuts bootstrapping after step t."""
    rewards = np.ascontiguousarray(rewards, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    dones = np.ascontiguousarray(dones, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape):
        raise ValueError("rewards, values and dones must have equal length")
    fn = _gae_numba if _BACKEND == "numba" else _gae_numpy
    return fn(rewards, values, float(bootstrap), dones, float(gamma), float(lam))


def discounted_returns(rewards, dones, gamma: float) -> np.ndarray:
    """Suffix sums G_t = r_t + gamma * G_{t+1}, reset after terminal steps."""
    rewards = np.ascontiguousarray(rewards, dtype=np.float64)
    dones = np.ascontiguousarray(dones, dtype=np.float64)
    fn = _discounted_numba if _BACKEND == "numba" else _discounted_numpy
    return fn(rewards, dones, float(gamma))


# ---------------------------------------------------------------------------
# drawdown


def _drawdown_numpy(equity):
    peak = np.maximum.accumulate(equity)
    return equity / peak - 1.0


@njit(cache=True)
def _drawdown_numba(equity):
    n = equity.shape[0]
    out = np.empty(n)
    peak = -np.inf
    for t in range(n):
        if equity[t] > peak:
            peak = equity[t]
        out[t] = equity[t] / peak - 1.0
    return out


def drawdown(equity) -> np.ndarray:
    equity = np.ascontiguousarray(equity, dtype=np.float64)
    fn = _drawdown_numba if _BACKEND == "numba" else _drawdown_numpy
    return fn(equity)


# ---------------------------------------------------------------------------
# capped simplex projection
#
# Solves min ||w - v||^2 s.t. 0 <= w_i <= u_i, sum w = 1 through the threshold
# form w_i = clip(v_i - tau, 0, u_i). f(tau) = sum_i clip(v_i - tau, 0, u_i) is
# piecewise linear and nonincreasing with kinks at v_i and v_i - u_i, so tau is
# found exactly by locating the bracketing kinks and interpolating.


def _project_numpy(v, caps):
    live = caps > 0.0
    vl = v[live]
    ul = caps[live]
    finite = np.isfinite(ul)
    kinks = np.sort(np.concatenate([vl, vl[finite] - ul[finite]]))
    # f evaluated at every kink, shape (n_kinks,)
    f = np.minimum(np.maximum(vl[None, :] - kinks[:, None], 0.0), ul[None, :]).sum(axis=1)
    out = np.zeros_like(v)
    if f[0] < 1.0:
        n_unc = int(np.count_nonzero(~finite))
        if n_unc == 0:
            raise ValueError("infeasible caps: sum of caps < 1")
        tau = kinks[0] - (1.0 - f[0]) / n_unc
    else:
        k = int(np.searchsorted(-f, -1.0, side="right")) - 1
        if k >= kinks.shape[0] - 1:
            tau = kinks[-1]
        else:
            f0, f1 = f[k], f[k + 1]
            tau = kinks[k] if f0 == f1 else kinks[k] + (f0 - 1.0) * (kinks[k + 1] - kinks[k]) / (f0 - f1)
    out[live] = np.minimum(np.maximum(vl - tau, 0.0), ul)
    return out


@njit(cache=True)
def _project_numba(v, caps):
    n = v.shape[0]
    kinks = np.empty(2 * n)
    m = 0
    n_unc = 0
    for i in range(n):
        if caps[i] > 0.0:
            kinks[m] = v[i]
            m += 1
            if np.isfinite(caps[i]):
                kinks[m] = v[i] - caps[i]
                m += 1
            else:
                n_unc += 1
    kinks = np.sort(kinks[:m])
    f = np.empty(m)
    for k in range(m):
        s = 0.0
        for i in range(n):
            if caps[i] > 0.0:
                x = v[i] - kinks[k]
                if x < 0.0:
                    x = 0.0
                if x > caps[i]:
                    x = caps[i]
                s += x
        f[k] = s
    if f[0] < 1.0:
        if n_unc == 0:
            raise ValueError("infeasible caps: sum of caps < 1")
        tau = kinks[0] - (1.0 - f[0]) / n_unc
    else:
        k = 0
        while k + 1 < m and f[k + 1] >= 1.0:
            k += 1
        if k >= m - 1:
            tau = kinks[m - 1]
        else:
            f0 = f[k]
            f1 = f[k + 1]
            if f0 == f1:
                tau = kinks[k]
            else:
                tau = kinks[k] + (f0 - 1.0) * (kinks[k + 1] - kinks[k]) / (f0 - f1)
    out = np.zeros(n)
    for i in range(n):
        if caps[i] > 0.0:
            x = v[i] - tau
            if x < 0.0:
                x = 0.0
            if x > caps[i]:
                x = caps[i]
            out[i] = x
    return out


def project_capped(v, caps) -> np.ndarray:
    """Euclidean projection of ``v`` onto {0 <= w <= caps, sum w = 1}.

    ``caps`` may hold ``inf`` (uncapped) and ``0`` (coordinate pinned to 0).
    """
    v = np.ascontiguousarray(v, dtype=np.float64)
    caps = np.ascontiguousarray(caps, dtype=np.float64)
    if v.shape != caps.shape or v.ndim != 1:
        raise ValueError("v and caps must be 1-D arrays of equal length")
    if np.any(caps < 0):
        raise ValueError("caps must be nonnegative")
    if not np.any(caps > 0):
        raise ValueError("infeasible caps: every coordinate pinned to 0")
    fn = _project_numba if _BACKEND == "numba" else _project_numpy
    return fn(v, caps)


# ---------------------------------------------------------------------------
# pairwise-complete covariance


def _paircov_numpy(x, valid):
    v = valid.astype(np.float64)
    x0 = np.where(valid, x, 0.0)
    n = v.T @ v
    sx = x0.T @ v  # sx[i, j] = sum of x_i over rows where j is also valid
    sxy = x0.T @ x0
    with np.errstate(invalid="ignore", divide="ignore"):
        cov = (sxy - sx * sx.T / n) / (n - 1.0)
    cov[n < 2] = 0.0
    return cov


@njit(cache=True)
def _paircov_numba(x, valid):
    # two-pass per pair on column-contiguous copies
    L, N = x.shape
    xt = np.ascontiguousarray(x.T)
    vt = np.ascontiguousarray(valid.T)
    cov = np.zeros((N, N))
    for i in range(N):
        xi = xt[i]
        vi = vt[i]
        for j in range(i, N):
            xj = xt[j]
            vj = vt[j]
            cnt = 0
            mi = 0.0
            mj = 0.0
            for t in range(L):
                if vi[t] and vj[t]:
                    cnt += 1
                    mi += xi[t]
                    mj += xj[t]
            if cnt < 2:
                continue
            mi /= cnt
            mj /= cnt
            s = 0.0
            for t in range(L):
                if vi[t] and vj[t]:
                    s += (xi[t] - mi) * (xj[t] - mj)
            cov[i, j] = s / (cnt - 1)
            cov[j, i] = cov[i, j]
    return cov


PAIRCOV_NUMBA_MAX_N = 32


def pairwise_cov(x, valid) -> np.ndarray:
    """Sample covariance (ddof=1) over pairwise-complete rows of an L x N block."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    valid = np.ascontiguousarray(valid, dtype=np.bool_) & np.isfinite(x)
    # the O(N^2 L) loop loses to BLAS once the universe gets wide
    fn = _paircov_numba if _BACKEND == "numba" and x.shape[1] <= PAIRCOV_NUMBA_MAX_N else _paircov_numpy
    return fn(x, valid)


KERNELS: dict[str, tuple[Callable, Callable]] = {
    "gae": (_gae_numba, _gae_numpy),
    "discounted": (_discounted_numba, _discounted_numpy),
    "drawdown": (_drawdown_numba, _drawdown_numpy),
    "project_capped": (_project_numba, _project_numpy),
    "pairwise_cov": (_paircov_numba, _paircov_numpy),
}
