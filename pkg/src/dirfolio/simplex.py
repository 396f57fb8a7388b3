"""Dirichlet distribution math, tradability masking and capped-simplex projection.

Index 0 of every weight/concentration vector is cash. Functions accept a
single vector or a batch with the simplex along the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from . import kernels
from .autodiff import tensor as T
from .errors import DegenerateMaskError, FeasibilityError, ParameterError, ShapeError

EPS_FLOOR = 1e-3
CLAMP = 1e-12


@dataclass(frozen=True)
class DirichletParams:
    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        object.__setattr__(self, "alpha", a)
        _check_alpha(a)

    def __len__(self):
        return self.alpha.shape[-1]


def _as_alpha(params) -> np.ndarray:
    if isinstance(params, DirichletParams):
        return params.alpha
    a = np.asarray(params, dtype=np.float64)
    _check_alpha(a)
    return a


def _check_alpha(a: np.ndarray) -> None:
    if a.ndim == 0 or a.shape[-1] < 2:
        raise ShapeError("Dirichlet needs at least 2 coordinates")
    if not np.all(np.isfinite(a)):
        raise ParameterError("concentrations must be finite")
    if np.any(a <= 0):
        raise ParameterError("concentrations must be > 0")


# ---------------------------------------------------------------------------
# sampling


def _log_gamma_mt(shape: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """log of Gamma(shape, 1) draws via Marsaglia-Tsang, boosted for shape < 1.

    Works in log space so that tiny shapes do not underflow.
    """
    shape = np.asarray(shape, dtype=np.float64)
    flat = shape.ravel()
    boost = flat < 1.0
    a = np.where(boost, flat + 1.0, flat)
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(flat)
    pending = np.arange(flat.size)
    while pending.size:
        x = rng.standard_normal(pending.size)
        u = rng.random(pending.size)
        dp, cp = d[pending], c[pending]
        v = 1.0 + cp * x
        ok = v > 0
        v3 = np.where(ok, v, 1.0) ** 3
        with np.errstate(divide="ignore"):
            accept = ok & (np.log(u) < 0.5 * x * x + dp - dp * v3 + dp * np.log(v3))
        idx = pending[accept]
        out[idx] = np.log(dp[accept]) + np.log(v3[accept])
        pending = pending[~accept]
    if boost.any():
        ub = rng.random(int(boost.sum()))
        out[boost] += np.log(ub) / flat[boost]
    return out.reshape(shape.shape)


def dirichlet_sample(params, rng: np.random.Generator) -> np.ndarray:
    """Draw from Dir(alpha): independent Gamma(alpha_i, 1) normalized by their sum."""
    alpha = _as_alpha(params)
    logg = _log_gamma_mt(alpha, rng)
    logg -= logg.max(axis=-1, keepdims=True)
    p = np.exp(logg)
    p = np.maximum(p, np.finfo(np.float64).tiny)
    return p / p.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# density, moments


def dirichlet_log_pdf(params, x) -> np.ndarray | float:
    alpha = _as_alpha(params)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != alpha.shape[-1]:
        raise ShapeError(f"point has {x.shape[-1]} coordinates, alpha has {alpha.shape[-1]}")
    lx = np.log(np.maximum(x, CLAMP))
    out = gammaln(alpha.sum(-1)) - gammaln(alpha).sum(-1) + ((alpha - 1.0) * lx).sum(-1)
    return out if np.ndim(out) else float(out)


def dirichlet_log_pdf_grad(params, x) -> np.ndarray:
    """d log p / d alpha = psi(sum alpha) - psi(alpha_i) + log x_i."""
    alpha = _as_alpha(params)
    x = np.asarray(x, dtype=np.float64)
    lx = np.log(np.maximum(x, CLAMP))
    return digamma(alpha.sum(-1, keepdims=True)) - digamma(alpha) + lx


def dirichlet_mean(params) -> np.ndarray:
    alpha = _as_alpha(params)
    return alpha / alpha.sum(-1, keepdims=True)


def dirichlet_entropy(params) -> np.ndarray | float:
    alpha = _as_alpha(params)
    k = alpha.shape[-1]
    a0 = alpha.sum(-1)
    log_b = gammaln(alpha).sum(-1) - gammaln(a0)
    out = log_b + (a0 - k) * digamma(a0) - ((alpha - 1.0) * digamma(alpha)).sum(-1)
    return out if np.ndim(out) else float(out)


def dirichlet_kl(p_params, q_params) -> np.ndarray | float:
    """KL(Dir(a) || Dir(b)) in closed form."""
    a = _as_alpha(p_params)
    b = _as_alpha(q_params)
    a0 = a.sum(-1)
    out = (
        gammaln(a0)
        - gammaln(a).sum(-1)
        - gammaln(b.sum(-1))
        + gammaln(b).sum(-1)
        + ((a - b) * (digamma(a) - digamma(a0)[..., None])).sum(-1)
    )
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# feasibility


def full_mask(asset_mask, include_cash: bool = True) -> np.ndarray:
    """Prepend the cash slot to an N-vector (or B x N) asset mask."""
    m = np.asarray(asset_mask, dtype=bool)
    cash = np.full(m.shape[:-1] + (1,), include_cash, dtype=bool)
    return np.concatenate([cash, m], axis=-1)


def mask_and_renormalize(p, mask) -> np.ndarray:
    """w = (p * m) / sum(p * m); masked coordinates are exactly 0."""
    p = np.asarray(p, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    if p.shape != m.shape:
        raise ShapeError(f"point shape {p.shape} != mask shape {m.shape}")
    q = np.where(m, p, 0.0)
    denom = q.sum(-1, keepdims=True)
    if np.any(denom < 1e-12):
        raise DegenerateMaskError("mask leaves (almost) no probability mass")
    return q / denom


def project_capped_simplex(w, caps, mask=None) -> np.ndarray:
    """Euclidean projection onto {0 <= w_i <= cap_i, sum w = 1}; cash is never capped.

    ``caps`` is a scalar or an N-vector of per-name bounds (risky names only).
    Names excluded by ``mask`` (length N+1) are pinned to 0.
    """
    w = np.asarray(w, dtype=np.float64)
    n = w.shape[-1]
    name_caps = np.broadcast_to(np.asarray(caps, dtype=np.float64), (n - 1,))
    upper = np.concatenate([[np.inf], name_caps])
    if mask is not None:
        upper = np.where(np.asarray(mask, dtype=bool), upper, 0.0)
    upper = np.broadcast_to(upper, w.shape).reshape(-1, n)
    rows = w.reshape(-1, n)
    out = np.empty_like(rows)
    for k in range(rows.shape[0]):
        u = upper[k]
        if np.isfinite(u).all() and u.sum() < 1.0 - 1e-12:
            raise FeasibilityError(f"caps sum to {u.sum():.6g} < 1")
        if not np.any(u > 0):
            raise FeasibilityError("no feasible coordinate")
        out[k] = kernels.project_capped(rows[k], u)
    return out.reshape(w.shape)


# ---------------------------------------------------------------------------
# differentiable counterparts (concentrations as autodiff tensors, last axis)


def log_pdf_tensor(alpha, x):
    """Dirichlet log-density with gradients w.r.t. ``alpha``; ``x`` is data."""
    lx = np.log(np.maximum(np.asarray(x, dtype=np.float64), CLAMP))
    return T.lgamma(alpha.sum(axis=-1)) - T.lgamma(alpha).sum(axis=-1) + ((alpha - 1.0) * lx).sum(axis=-1)


def entropy_tensor(alpha):
    k = alpha.shape[-1]
    a0 = alpha.sum(axis=-1)
    log_b = T.lgamma(alpha).sum(axis=-1) - T.lgamma(a0)
    return log_b + (a0 - float(k)) * T.digamma(a0) - ((alpha - 1.0) * T.digamma(alpha)).sum(axis=-1)


def kl_tensor(alpha, alpha_old):
    """KL(Dir(alpha) || Dir(alpha_old)); ``alpha_old`` is a constant array."""
    b = np.asarray(alpha_old, dtype=np.float64)
    a0 = alpha.sum(axis=-1)
    const = -gammaln(b.sum(-1)) + gammaln(b).sum(-1)
    psi_gap = T.digamma(alpha) - T.digamma(a0).reshape(*a0.shape, 1)
    return T.lgamma(a0) - T.lgamma(alpha).sum(axis=-1) + const + ((alpha - b) * psi_gap).sum(axis=-1)
