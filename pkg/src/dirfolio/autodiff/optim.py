"""Adam with global-norm gradient clipping."""
from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from ..errors import TrainingError
from .tensor import Tensor

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


class ParamStore:
    """Named parameters plus Adam moment buffers and the step counter."""

    def __init__(self, params: Mapping[str, Tensor]):
        self.params = dict(params)
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.step = 0

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in self.params.items()}

    def global_norm(self) -> float:
        return math.sqrt(sum(float((g * g).sum()) for g in self.grads().values()))

    def state(self) -> dict:
        return {"m": {k: v.copy() for k, v in self.m.items()}, "v": {k: v.copy() for k, v in self.v.items()}, "step": self.step}

    def load_state(self, state: Mapping) -> None:
        for k in self.params:
            self.m[k] = np.asarray(state["m"][k], dtype=np.float64).copy()
            self.v[k] = np.asarray(state["v"][k], dtype=np.float64).copy()
        self.step = int(state["step"])


def adam_step(store: ParamStore, lr: float, clip_norm: float | None = None) -> float:
    """One clipped Adam update. Returns the pre-clip global gradient norm."""
    grads = store.grads()
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter {name!r}")
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    scale = 1.0
    if clip_norm is not None and clip_norm > 0 and norm > clip_norm:
        scale = clip_norm / norm
    store.step += 1
    t = store.step
    bc1 = 1.0 - BETA1**t
    bc2 = 1.0 - BETA2**t
    for name, p in store.params.items():
        g = grads[name] * scale
        m = store.m[name]
        v = store.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        p.data = p.data - lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    return norm
