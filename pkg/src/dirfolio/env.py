"""Daily-rebalancing portfolio MDP with turnover cost and variance penalty."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ActionError, ConfigError, RangeError, WindowError
from .panel import PanelTensor

WIPEOUT_REWARD = math.log(1e-8)
FEAS_TOL = 1e-9


@dataclass
class EnvConfig:
    window: int = 30
    kappa: float = 5e-4
    lambda_risk: float = 0.0
    cov_window: int = 60
    include_cash: bool = True
    caps: float | None = None
    episode_days: int = 128

    def validate(self) -> "EnvConfig":
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.kappa < 0 or self.lambda_risk < 0:
            raise ConfigError("kappa and lambda_risk must be >= 0")
        if self.lambda_risk > 0 and self.cov_window < 2:
            raise ConfigError("cov_window must be >= 2 when lambda_risk > 0")
        if self.caps is not None and not self.caps > 0:
            raise ConfigError("caps must be positive")
        return self

    @property
    def warmup(self) -> int:
        """Earliest admissible start index."""
        lookback = self.window
        if self.lambda_risk > 0:
            lookback = max(lookback, self.cov_window)
        return lookback - 1


@dataclass
class EnvState:
    t: int
    window: np.ndarray
    mask: np.ndarray
    drifted_weights: np.ndarray
    wealth: float
    market: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class StepResult:
    reward: float
    next_state: EnvState
    done: bool
    info: dict


class PanelAccess:
    """Read gate over a panel that counts which day indices get touched.

    Reads at or beyond ``limit`` are counted as forbidden; with ``strict`` they
    raise instead. Used to prove training never sees test-range rows.
    """

    def __init__(self, panel: PanelTensor, limit: int | None = None, strict: bool = False):
        self.panel = panel
        self.limit = limit
        self.strict = strict
        self.reads = 0
        self.forbidden_reads = 0
        self.max_day = -1

    def _touch(self, lo: int, hi: int) -> None:
        self.reads += hi - lo + 1
        self.max_day = max(self.max_day, hi)
        if self.limit is not None and hi >= self.limit:
            bad = hi - max(lo, self.limit) + 1
            self.forbidden_reads += bad
            if self.strict:
                raise RangeError(f"read of day {hi} beyond access limit {self.limit}")

    def window(self, t: int, W: int) -> np.ndarray:
        if t < W - 1 or t >= self.panel.z.shape[0]:
            raise WindowError(f"day {t} cannot host a window of length {W}")
        self._touch(t - W + 1, t)
        win = self.panel.z[t - W + 1 : t + 1].view()
        win.flags.writeable = False
        return win

    def mask(self, t: int) -> np.ndarray:
        self._touch(t, t)
        return self.panel.mask[t]

    def returns(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        self._touch(t - 1, t)
        valid = self.panel.mask[t] & self.panel.mask[t - 1]
        return np.where(valid, self.panel.simple_returns[t], 0.0), valid

    def returns_block(self, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
        self._touch(max(lo - 1, 0), hi)
        m = self.panel.mask
        valid = np.zeros((hi - lo + 1, m.shape[1]), dtype=bool)
        for k, t in enumerate(range(lo, hi + 1)):
            if t >= 1:
                valid[k] = m[t] & m[t - 1]
        return self.panel.simple_returns[lo : hi + 1], valid

    def summary(self) -> dict:
        return {
            "limit": self.limit,
            "reads": self.reads,
            "max_day_read": self.max_day,
            "test_reads": self.forbidden_reads,
        }


def drift_weights(w, r, mask_next) -> np.ndarray:
    """Value-weighted drift of post-trade weights; cash earns 0.

    Mass of names untradable on the next day is swept into cash.
    """
    w = np.asarray(w, dtype=np.float64)
    r = np.where(np.isfinite(r), r, 0.0)
    grown = np.concatenate([w[:1], w[1:] * (1.0 + r)])
    out = grown / grown.sum()
    dead = ~np.asarray(mask_next, dtype=bool)
    if dead.any():
        out[0] += out[1:][dead].sum()
        out[1:][dead] = 0.0
    return out


def rolling_covariance(returns, mask, valid=None) -> np.ndarray:
    """Pairwise-complete sample covariance of an L x N return block.

    Rows/cols of masked names are zero; negative eigenvalues created by
    pairwise deletion are clipped so the result is PSD.
    """
    x = np.asarray(returns, dtype=np.float64)
    if valid is None:
        valid = np.isfinite(x)
    cov = kernels.pairwise_cov(x, valid)
    live = np.asarray(mask, dtype=bool)
    cov[~live, :] = 0.0
    cov[:, ~live] = 0.0
    if live.sum() >= 2:
        sub = cov[np.ix_(live, live)]
        vals, vecs = np.linalg.eigh(sub)
        if vals[0] < 0:
            sub = (vecs * np.maximum(vals, 0.0)) @ vecs.T
            sub = 0.5 * (sub + sub.T)
            cov[np.ix_(live, live)] = sub
    return cov


class PortfolioEnv:
    """Stateless transition function over a panel; states are explicit.

    ``end`` is the last day index whose returns the environment may consume.
    """

    def __init__(
        self,
        panel: PanelTensor,
        config: EnvConfig,
        end: int | None = None,
        access: PanelAccess | None = None,
        market: np.ndarray | None = None,
    ):
        self.panel = panel
        self.config = config.validate()
        self.access = access or PanelAccess(panel)
        self.end = panel.z.shape[0] - 1 if end is None else int(end)
        self.market = market
        self.n_assets = panel.z.shape[1]
        self.caps_vec = None
        if config.caps is not None:
            self.caps_vec = np.full(self.n_assets, float(config.caps))

    def _market(self, t: int) -> np.ndarray:
        return np.zeros(0) if self.market is None else self.market[t]

    def _state(self, t: int, weights: np.ndarray, wealth: float) -> EnvState:
        return EnvState(
            t=t,
            window=self.access.window(t, self.config.window),
            mask=self.access.mask(t),
            drifted_weights=weights,
            wealth=wealth,
            market=self._market(t),
        )

    def reset(self, start: int) -> EnvState:
        if start < self.config.warmup:
            raise WindowError(f"start {start} precedes warm-up index {self.config.warmup}")
        if start >= self.end:
            raise RangeError(f"start {start} leaves no step before end {self.end}")
        w = np.zeros(self.n_assets + 1)
        w[0] = 1.0
        return self._state(start, w, 1.0)

    def check_target(self, state: EnvState, target) -> np.ndarray:
        w = np.asarray(target, dtype=np.float64)
        if w.shape != (self.n_assets + 1,):
            raise ActionError(f"target has shape {w.shape}, expected ({self.n_assets + 1},)")
        if not np.all(np.isfinite(w)) or w.min() < -FEAS_TOL or abs(w.sum() - 1.0) > FEAS_TOL:
            raise ActionError("target is not on the simplex")
        off = w[1:][~state.mask]
        if off.size and np.abs(off).max() > FEAS_TOL:
            raise ActionError(f"target places {np.abs(off).max():.3g} on masked names")
        if not self.config.include_cash and w[0] > FEAS_TOL:
            raise ActionError("cash is disabled")
        if self.caps_vec is not None and np.any(w[1:] > self.caps_vec + FEAS_TOL):
            raise ActionError("target violates name caps")
        return w

    def covariance(self, t: int, mask: np.ndarray) -> np.ndarray:
        L = self.config.cov_window
        block, valid = self.access.returns_block(t - L + 1, t)
        return rolling_covariance(block, mask, valid)

    def step(self, state: EnvState, target) -> StepResult:
        cfg = self.config
        t = state.t
        if t + 1 > self.end:
            raise RangeError(f"no returns available after day {t}")
        w = self.check_target(state, target)
        r, _ = self.access.returns(t + 1)
        mask_next = self.access.mask(t + 1)

        g = float(w[1:] @ r)
        turnover = float(np.abs(w[1:] - state.drifted_weights[1:]).sum())
        risk = 0.0
        if cfg.lambda_risk > 0:
            risky = w[1:]
            risk = float(risky @ self.covariance(t, state.mask) @ risky)

        done = t + 1 >= self.end
        if 1.0 + g <= 0.0:
            log_growth = WIPEOUT_REWARD
            reward = WIPEOUT_REWARD
            done = True
        else:
            log_growth = math.log1p(g)
            reward = log_growth - cfg.kappa * turnover - cfg.lambda_risk * risk

        growth = (1.0 + g) * (1.0 - cfg.kappa * turnover)
        wealth = state.wealth * max(growth, 0.0)
        nxt = self._state(t + 1, drift_weights(w, r, mask_next), wealth)
        info = {
            "t": t,
            "gross_log_return": log_growth,
            "gross_simple_return": g,
            "turnover": turnover,
            "cost_paid": cfg.kappa * turnover,
            "risk_penalty": risk,
            "net_simple_return": growth - 1.0,
            "realized_weights": w,
        }
        return StepResult(reward=reward, next_state=nxt, done=done, info=info)


def write_step_log(results: Sequence[StepResult], path, dates=None) -> None:
    """Per-step diagnostics as CSV (weights omitted)."""
    cols = ["t", "reward", "gross_log_return", "turnover", "cost_paid", "risk_penalty", "net_simple_return", "wealth"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow((["date"] if dates is not None else []) + cols)
        for res in results:
            i = res.info
            row = [i["t"], res.reward, i["gross_log_return"], i["turnover"], i["cost_paid"], i["risk_penalty"],
                   i["net_simple_return"], res.next_state.wealth]
            prefix = [str(dates[i["t"] + 1].date())] if dates is not None else []
            wr.writerow(prefix + [repr(float(v)) if isinstance(v, float) else v for v in row])
