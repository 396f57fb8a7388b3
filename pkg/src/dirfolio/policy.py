"""Attention policy: per-asset temporal encoder, cross-sectional mixer with a
global token, a flat Dirichlet actor head over [cash + assets] and a value head.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import simplex
from .autodiff import nn
from .autodiff import tensor as T
from .autodiff.tensor import Tensor, no_grad, parameter
from .errors import ConfigError, DegenerateMaskError, ShapeError
from .seeding import stream


@dataclass
class PolicyConfig:
    d: int = 64
    temporal_encoder: str = "lstm"
    L_time: int = 1
    L_cross: int = 1
    heads: int = 4
    pool: str = "last"
    epsilon_alpha: float = 1e-3
    K: int = 0
    ffn_mult: int = 4
    asset_chunk: int = 0

    def validate(self) -> "PolicyConfig":
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} not divisible by heads={self.heads}")
        if self.epsilon_alpha <= 0:
            raise ConfigError("epsilon_alpha must be > 0")
        if self.temporal_encoder not in ("lstm", "transformer"):
            raise ConfigError(f"unknown temporal encoder {self.temporal_encoder!r}")
        if self.pool not in ("last", "mean"):
            raise ConfigError(f"unknown pooling {self.pool!r}")
        if self.L_time < 1 or self.L_cross < 0 or self.K < 0:
            raise ConfigError("need L_time >= 1, L_cross >= 0, K >= 0")
        return self


@dataclass
class PolicyOutput:
    alpha: Tensor  # (B, N+1)
    value: Tensor  # (B,)
    attention_weights: list = field(default_factory=list)


@dataclass
class ActResult:
    weights: np.ndarray
    log_prob: np.ndarray
    value: np.ndarray
    pre_mask_point: np.ndarray
    alpha: np.ndarray


class AttentionPolicy(nn.Module):
    def __init__(self, config: PolicyConfig, n_features: int, rng: np.random.Generator):
        self.config = config.validate()
        self.n_features = n_features
        d = config.d
        self.w_in = nn.Linear(n_features, d, rng)
        if config.temporal_encoder == "lstm":
            self.lstm = [nn.LSTMCell(d, d, rng) for _ in range(config.L_time)]
            self.w_out = nn.Linear(d, d, rng)
        else:
            self.time_layers = [nn.EncoderLayer(d, config.heads, rng, config.ffn_mult) for _ in range(config.L_time)]
        self.global_token = parameter(rng.uniform(-1, 1, size=d) / np.sqrt(d))
        self.cross_layers = [nn.EncoderLayer(d, config.heads, rng, config.ffn_mult) for _ in range(config.L_cross)]
        if config.K > 0:
            self.w_mkt = nn.Linear(config.K, d, rng, bias=False)
        self.actor_cash = nn.Linear(d, 1, rng)
        self.actor_asset = nn.Linear(d, 1, rng)
        self.critic = nn.Linear(d, 1, rng)

    # -- temporal encoder ------------------------------------------------------
    def _encode_rows(self, x: np.ndarray) -> Tensor:
        """x: (R, W, F) per-asset windows -> (R, d)."""
        cfg = self.config
        R, W, _ = x.shape
        u = self.w_in(Tensor(x))
        if cfg.temporal_encoder == "lstm":
            seq = [u[:, tau, :] for tau in range(W)]
            for cell in self.lstm:
                h = Tensor(np.zeros((R, cfg.d)))
                c = Tensor(np.zeros((R, cfg.d)))
                outs = []
                for x_tau in seq:
                    h, c = cell(x_tau, h, c)
                    outs.append(h)
                seq = outs
            pooled = seq[-1] if cfg.pool == "last" else T.stack(seq, axis=1).mean(axis=1)
            return self.w_out(pooled)
        z = u + nn.sinusoidal_positions(W, cfg.d)
        for layer in self.time_layers:
            z = layer(z)
        return z[:, -1, :] if cfg.pool == "last" else z.mean(axis=1)

    def encode_temporal(self, windows) -> Tensor:
        """(B, W, N, F) or (W, N, F) windows -> H of shape (B, N, d)."""
        x = np.asarray(windows, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[-1] != self.n_features:
            raise ShapeError(f"windows must be (B, W, N, {self.n_features}), got {x.shape}")
        B, W, N, F = x.shape
        rows = np.ascontiguousarray(x.transpose(0, 2, 1, 3).reshape(B * N, W, F))
        chunk = self.config.asset_chunk
        if chunk and chunk < rows.shape[0]:
            parts = [self._encode_rows(rows[s : s + chunk]) for s in range(0, rows.shape[0], chunk)]
            h = T.concat(parts, axis=0)
        else:
            h = self._encode_rows(rows)
        return h.reshape(B, N, self.config.d)

    # -- cross-sectional mixer -------------------------------------------------
    @staticmethod
    def attention_mask(mask: np.ndarray) -> np.ndarray:
        """Additive (B, 1, M, M) mask; masked asset tokens are cut off in both
        directions and only see themselves."""
        B, N = mask.shape
        valid = np.concatenate([np.ones((B, 1), dtype=bool), mask.astype(bool)], axis=1)
        allowed = (valid[:, :, None] & valid[:, None, :]) | np.eye(N + 1, dtype=bool)[None]
        return np.where(allowed, 0.0, nn.NEG_INF)[:, None, :, :]

    def mix_cross_section(self, H: Tensor, mask, z_mkt=None) -> tuple[Tensor, Tensor, list]:
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == 1:
            mask = mask[None]
        B, N, d = H.shape
        if not mask.any(axis=1).all():
            raise DegenerateMaskError("every asset is masked on some date")
        g0 = T.add(np.zeros((B, 1, d)), self.global_token)
        tokens = T.concat([g0, H], axis=1)
        add_mask = self.attention_mask(mask)
        weights = []
        for layer in self.cross_layers:
            tokens = layer(tokens, add_mask)
            weights.append(layer.attn.last_weights)
        g_star = tokens[:, 0, :]
        a_star = tokens[:, 1:, :]
        if self.config.K > 0 and z_mkt is not None:
            z = np.asarray(z_mkt, dtype=np.float64).reshape(B, self.config.K)
            g_star = g_star + self.w_mkt(Tensor(z))
        return g_star, a_star, weights

    # -- heads -------------------------------------------------------------------
    def actor_head(self, g_star: Tensor, a_star: Tensor) -> Tensor:
        B, N, _ = a_star.shape
        cash = self.actor_cash(g_star)
        assets = self.actor_asset(a_star).reshape(B, N)
        return T.softplus(T.concat([cash, assets], axis=1)) + self.config.epsilon_alpha

    def value_head(self, g_star: Tensor) -> Tensor:
        return self.critic(g_star).reshape(g_star.shape[0])

    def forward(self, windows, mask, z_mkt=None) -> PolicyOutput:
        H = self.encode_temporal(windows)
        g_star, a_star, weights = self.mix_cross_section(H, mask, z_mkt)
        return PolicyOutput(alpha=self.actor_head(g_star, a_star), value=self.value_head(g_star), attention_weights=weights)

    def config_dict(self) -> dict:
        return {**asdict(self.config), "n_features": self.n_features}


def build_policy(config: PolicyConfig, n_features: int, seed: int) -> AttentionPolicy:
    return AttentionPolicy(config, n_features, stream(seed, "init"))


def act(
    policy: AttentionPolicy,
    windows,
    mask,
    mode: str = "sample",
    rng: np.random.Generator | None = None,
    z_mkt=None,
    include_cash: bool = True,
    caps: float | None = None,
) -> ActResult:
    """encode -> mix -> heads -> Dirichlet draw (or mean) -> mask -> optional caps.

    Accepts one state (W, N, F) or a batch (B, W, N, F); the log-probability is
    evaluated at the pre-mask point.
    """
    single = np.ndim(windows) == 3
    mask = np.asarray(mask, dtype=bool)
    if single:
        mask = mask[None]
    with no_grad():
        out = policy(windows, mask, z_mkt)
    alpha = out.alpha.data
    if mode == "mean":
        p = simplex.dirichlet_mean(alpha)
    elif mode == "sample":
        if rng is None:
            raise ValueError("sampling needs a generator")
        p = simplex.dirichlet_sample(alpha, rng)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    logp = np.atleast_1d(simplex.dirichlet_log_pdf(alpha, p))
    fm = simplex.full_mask(mask, include_cash)
    w = simplex.mask_and_renormalize(p, fm)
    if caps is not None:
        w = simplex.project_capped_simplex(w, caps, mask=fm)
    res = ActResult(weights=w, log_prob=logp, value=out.value.data.copy(), pre_mask_point=p, alpha=alpha)
    if single:
        res = ActResult(w[0], logp[0], res.value[0], p[0], alpha[0])
    return res
