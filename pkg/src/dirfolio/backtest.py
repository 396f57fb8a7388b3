"""Deterministic out-of-sample evaluation of policies and baselines."""
from __future__ import annotations

import numpy as np
import pandas as pd

from .env import EnvConfig, PanelAccess, PortfolioEnv, StepResult
from .errors import RangeError
from .metrics import ReturnSeries
from .panel import PanelTensor, SplitSpec
from .policy import AttentionPolicy, act
from .simplex import full_mask, project_capped_simplex

BASELINES = ("equal_weight_buy_and_hold", "all_cash")


def parse_range(spec: str, panel: PanelTensor, split: SplitSpec | None = None) -> tuple[int, int]:
    """Resolve ``from:to`` (dates or day indices, either side may be empty) or a
    split name (``train``, ``validation``, ``test``) to inclusive day indices."""
    T = panel.z.shape[0]
    spec = (spec or "test").strip()
    if spec in ("train", "validation", "test"):
        if split is None:
            raise RangeError(f"range {spec!r} needs a split in the manifest")
        r = getattr(split, spec)
        if r is None:
            raise RangeError(f"split has no {spec} range")
        return int(r[0]), int(r[1])
    lo_s, sep, hi_s = spec.partition(":")
    if not sep:
        raise RangeError(f"range must be 'from:to', got {spec!r}")

    def resolve(tok: str, default: int, side: str) -> int:
        tok = tok.strip()
        if not tok:
            return default
        if tok.lstrip("-").isdigit():
            return int(tok)
        try:
            ts = pd.Timestamp(tok)
        except ValueError as exc:
            raise RangeError(f"cannot parse range bound {tok!r}") from exc
        if ts < panel.dates[0] or ts > panel.dates[-1]:
            raise RangeError(f"{tok} lies outside the data ({panel.dates[0].date()}..{panel.dates[-1].date()})")
        return int(panel.dates.searchsorted(ts, side="left" if side == "lo" else "right")) - (side == "hi")

    lo, hi = resolve(lo_s, 0, "lo"), resolve(hi_s, T - 1, "hi")
    if not (0 <= lo < hi <= T - 1):
        raise RangeError(f"range [{lo}, {hi}] invalid for {T} days")
    return lo, hi


def _check(env_cfg: EnvConfig, lo: int, hi: int, T: int) -> int:
    start = max(lo, env_cfg.warmup)
    if hi > T - 1 or start >= hi:
        raise RangeError(f"range [{lo}, {hi}] leaves no evaluation steps (warm-up {env_cfg.warmup})")
    return start


def run_weights(env: PortfolioEnv, start: int, targets) -> tuple[ReturnSeries, list[StepResult]]:
    """Step the env with a target per day (array, or callable of the state)."""
    state = env.reset(start)
    results = []
    for k in range(env.end - start):
        w = targets(state) if callable(targets) else targets[k]
        res = env.step(state, w)
        results.append(res)
        state = res.next_state
        if res.done:
            break
    net = np.array([r.info["net_simple_return"] for r in results])
    equity = np.array([r.next_state.wealth for r in results])
    dates = env.panel.dates[start + 1 : start + 1 + len(results)]
    return ReturnSeries(pd.DatetimeIndex(dates), net, equity), results


def evaluate_policy(
    policy: AttentionPolicy,
    panel: PanelTensor,
    env_cfg: EnvConfig,
    lo: int,
    hi: int,
    market: np.ndarray | None = None,
) -> tuple[ReturnSeries, list[StepResult]]:
    """Mean-action rollout: weights chosen at day t earn the returns of t+1,
    for t = lo .. hi-1 (lo is pushed forward to the warm-up index)."""
    T = panel.z.shape[0]
    start = _check(env_cfg, lo, hi, T)
    env = PortfolioEnv(panel, env_cfg, end=hi, access=PanelAccess(panel), market=market)
    W = env_cfg.window
    ts = np.arange(start, hi)
    windows = np.stack([panel.z[t - W + 1 : t + 1] for t in ts])
    masks = panel.mask[ts]
    z_mkt = None if market is None else market[ts]
    res = act(policy, windows, masks, mode="mean", z_mkt=z_mkt, include_cash=env_cfg.include_cash, caps=env_cfg.caps)
    return run_weights(env, start, res.weights)


def _equal_weight(mask: np.ndarray, caps: float | None = None) -> np.ndarray:
    w = np.zeros(mask.size + 1)
    n = int(mask.sum())
    if n == 0:
        w[0] = 1.0
    else:
        w[1:][mask] = 1.0 / n
        if caps is not None and 1.0 / n > caps:
            w = project_capped_simplex(w, caps, mask=full_mask(mask))
    return w


def evaluate_baseline(
    name: str,
    panel: PanelTensor,
    env_cfg: EnvConfig,
    lo: int,
    hi: int,
) -> tuple[ReturnSeries, list[StepResult]]:
    """``all_cash`` or ``equal_weight_buy_and_hold``: 1/n_t over tradable names at
    inception, drift afterwards, re-level only when the tradable set changes."""
    if name not in BASELINES:
        raise RangeError(f"unknown baseline {name!r}; choose from {BASELINES}")
    T = panel.z.shape[0]
    start = _check(env_cfg, lo, hi, T)
    env = PortfolioEnv(panel, env_cfg, end=hi, access=PanelAccess(panel))
    n = panel.z.shape[1]

    if name == "all_cash":
        cash = np.zeros(n + 1)
        cash[0] = 1.0
        return run_weights(env, start, lambda s: cash)

    held = {"set": None}

    def target(state):
        m = np.asarray(state.mask, dtype=bool)
        if held["set"] is None or not np.array_equal(m, held["set"]):
            held["set"] = m.copy()
            return _equal_weight(m, env_cfg.caps)
        w = state.drifted_weights.copy()
        if not env_cfg.include_cash and w[0] > 0:
            return _equal_weight(m, env_cfg.caps)
        if env_cfg.caps is not None and w[1:].max() > env_cfg.caps:
            w = project_capped_simplex(w, env_cfg.caps, mask=full_mask(m))
        return w

    return run_weights(env, start, target)
