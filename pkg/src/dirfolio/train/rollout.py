"""On-policy rollout collection and advantage targets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..env import PortfolioEnv
from ..errors import RolloutError
from ..policy import AttentionPolicy, act


@dataclass
class Trajectory:
    days: np.ndarray
    windows: np.ndarray  # (n, W, N, F)
    masks: np.ndarray  # (n, N)
    market: np.ndarray | None
    pre_mask_action: np.ndarray  # (n, N+1)
    old_log_prob: np.ndarray
    old_alpha: np.ndarray
    reward: np.ndarray
    value: np.ndarray
    done: np.ndarray
    bootstrap_value: float
    advantage: np.ndarray | None = None
    return_target: np.ndarray | None = None
    info: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.reward)


def compute_gae(rewards, values, bootstrap: float, gamma: float, lam: float, dones=None):
    """GAE(lambda) advantages and value targets (advantage + value)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape:
        raise ValueError("rewards and values must have equal length")
    dones = np.zeros_like(rewards) if dones is None else np.asarray(dones, dtype=np.float64)
    adv = kernels.gae(rewards, values, bootstrap, dones, gamma, lam)
    return adv, adv + values


def monte_carlo_returns(rewards, gamma: float, dones=None) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.zeros_like(rewards) if dones is None else np.asarray(dones, dtype=np.float64)
    return kernels.discounted_returns(rewards, dones, gamma)


def collect_rollout(
    env: PortfolioEnv,
    policy: AttentionPolicy,
    days: int,
    rng: np.random.Generator,
    start: int,
) -> Trajectory:
    """Run ``days`` stochastic steps from ``start``.

    The policy conditions only on (window, mask, covariates), never on the
    portfolio, so all actions for the segment are drawn in one batched pass;
    the environment is then stepped in order.
    """
    if start + days > env.end:
        raise RolloutError(f"need {days} steps from day {start}, data ends at {env.end}")
    state = env.reset(start)
    W = env.config.window
    ts = np.arange(start, start + days + 1)
    windows = np.stack([env.access.window(int(t), W) for t in ts])
    masks = np.stack([env.access.mask(int(t)) for t in ts])
    market = None if env.market is None else env.market[ts]

    res = act(
        policy,
        windows[:-1],
        masks[:-1],
        mode="sample",
        rng=rng,
        z_mkt=None if market is None else market[:-1],
        include_cash=env.config.include_cash,
        caps=env.config.caps,
    )
    boot = act(policy, windows[-1:], masks[-1:], mode="mean", z_mkt=None if market is None else market[-1:])

    rewards = np.empty(days)
    dones = np.zeros(days)
    infos = []
    for k in range(days):
        out = env.step(state, res.weights[k])
        rewards[k] = out.reward
        infos.append(out.info)
        state = out.next_state
        if out.done:
            dones[k] = 1.0
            if k != days - 1:
                raise RolloutError(f"episode terminated early at step {k}")
    if not np.all(np.isfinite(rewards)):
        raise RolloutError("non-finite reward")
    return Trajectory(
        days=ts[:-1],
        windows=windows[:-1],
        masks=masks[:-1],
        market=None if market is None else market[:-1],
        pre_mask_action=res.pre_mask_point,
        old_log_prob=res.log_prob,
        old_alpha=res.alpha,
        reward=rewards,
        value=res.value,
        done=dones,
        bootstrap_value=0.0 if dones[-1] else float(boot.value[0]),
        info=infos,
    )


def concat_trajectories(parts: list[Trajectory]) -> Trajectory:
    """Join segments whose advantages/targets were already computed per segment."""
    if len(parts) == 1:
        return parts[0]
    if any(p.advantage is None for p in parts):
        raise ValueError("compute advantages per segment before concatenating")
    cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
    return Trajectory(
        days=cat("days"),
        windows=cat("windows"),
        masks=cat("masks"),
        market=None if parts[0].market is None else cat("market"),
        pre_mask_action=cat("pre_mask_action"),
        old_log_prob=cat("old_log_prob"),
        old_alpha=cat("old_alpha"),
        reward=cat("reward"),
        value=cat("value"),
        done=cat("done"),
        bootstrap_value=parts[-1].bootstrap_value,
        advantage=cat("advantage"),
        return_target=cat("return_target"),
        info=[i for p in parts for i in p.info],
    )
