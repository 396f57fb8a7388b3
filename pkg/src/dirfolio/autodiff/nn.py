"""Layers built from the tensor primitives."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from ..errors import ConfigError, ShapeError
from . import tensor as T
from .tensor import Tensor, parameter

NEG_INF = -1e9


class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{name}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)[:5]}")
        for k, p in own.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"{k}: checkpoint shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = parameter(_uniform(rng, d_in, (d_in, d_out)))
        self.bias = parameter(_uniform(rng, d_in, (d_out,))) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gain = parameter(np.ones(d))
        self.shift = parameter(np.zeros(d))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, axis=-1, eps=self.eps) * self.gain + self.shift


class LSTMCell(Module):
    """Gate order (input, forget, candidate, output); forget bias starts at 1."""

    def __init__(self, d_in: int, d: int, rng: np.random.Generator):
        self.d = d
        self.w_x = parameter(_uniform(rng, d_in, (d_in, 4 * d)))
        self.w_h = parameter(_uniform(rng, d, (d, 4 * d)))
        b = np.zeros(4 * d)
        b[d : 2 * d] = 1.0
        self.bias = parameter(b)

    def forward(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[-1] != self.w_x.shape[0] or h.shape[-1] != self.d or c.shape[-1] != self.d:
            raise ShapeError(f"lstm_cell: got x{x.shape}, h{h.shape}, c{c.shape}")
        d = self.d
        gates = T.matmul(x, self.w_x) + T.matmul(h, self.w_h) + self.bias
        i = T.sigmoid(gates[..., 0:d])
        f = T.sigmoid(gates[..., d : 2 * d])
        g = T.tanh(gates[..., 2 * d : 3 * d])
        o = T.sigmoid(gates[..., 3 * d : 4 * d])
        c_new = f * c + i * g
        h_new = o * T.tanh(c_new)
        return h_new, c_new


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention over the second-to-last axis.

    ``mask`` is additive and broadcastable to (B, heads, M, M); blocked
    positions carry -1e9.
    """

    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        if d % heads:
            raise ConfigError(f"model width {d} not divisible by {heads} heads")
        self.d, self.heads, self.dk = d, heads, d // heads
        self.w_q = Linear(d, d, rng, bias=False)
        self.w_k = Linear(d, d, rng, bias=False)
        self.w_v = Linear(d, d, rng, bias=False)
        self.w_o = Linear(d, d, rng, bias=False)
        self.last_weights: np.ndarray | None = None

    def _split(self, x: Tensor) -> Tensor:
        B, M, _ = x.shape
        return x.reshape(B, M, self.heads, self.dk).transpose(0, 2, 1, 3)

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        if x.shape[-1] != self.d:
            raise ShapeError(f"mhsa: token width {x.shape[-1]} != {self.d}")
        B, M, _ = x.shape
        q, k, v = self._split(self.w_q(x)), self._split(self.w_k(x)), self._split(self.w_v(x))
        scores = T.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(self.dk))
        if mask is not None:
            scores = scores + np.asarray(mask, dtype=np.float64)
        attn = T.softmax(scores, axis=-1)
        self.last_weights = attn.data
        u = T.matmul(attn, v).transpose(0, 2, 1, 3).reshape(B, M, self.d)
        out = self.w_o(u)
        return out.reshape(M, self.d) if squeeze else out


def mhsa(tokens: Tensor, attn: MultiHeadAttention, mask: np.ndarray | None = None) -> Tensor:
    return attn(tokens, mask)


class FeedForward(Module):
    def __init__(self, d: int, hidden: int, rng: np.random.Generator):
        self.inner = Linear(d, hidden, rng)
        self.outer = Linear(hidden, d, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.outer(T.tanh(self.inner(x)))


class EncoderLayer(Module):
    """Post-norm block: LN(x + MHSA(x)) then LN(y + FFN(y))."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator, ffn_mult: int = 4):
        self.attn = MultiHeadAttention(d, heads, rng)
        self.norm1 = LayerNorm(d)
        self.ffn = FeedForward(d, ffn_mult * d, rng)
        self.norm2 = LayerNorm(d)

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        y = self.norm1(x + self.attn(x, mask))
        return self.norm2(y + self.ffn(y))


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
