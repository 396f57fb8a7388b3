"""PPO, A2C and REINFORCE updates on a collected trajectory."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import simplex
from ..autodiff import tensor as T
from ..autodiff.optim import ParamStore, adam_step
from ..errors import ConfigError
from ..policy import AttentionPolicy
from .rollout import Trajectory, compute_gae, monte_carlo_returns

ALGOS = ("ppo", "a2c", "reinforce")


@dataclass
class TrainConfig:
    algo: str = "ppo"
    lr: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    kl_coef: float = 0.0
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    rollout_days: int = 128
    updates_per_epoch: int = 6
    minibatch: int = 256
    microbatch: int = 32
    epochs_per_update: int = 1
    seed: int = 42
    clip_norm: float = 0.5
    n_updates: int = 60
    checkpoint_every: int = 0
    normalize_advantages: bool = True
    finetune_updates: int = 6

    def validate(self) -> "TrainConfig":
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {ALGOS}")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ConfigError("gae_lambda must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise ConfigError("clip_eps must be > 0")
        if self.microbatch <= 0 or self.minibatch % self.microbatch:
            raise ConfigError("minibatch must be a multiple of microbatch")
        return self


def prepare_targets(traj: Trajectory, cfg: TrainConfig) -> Trajectory:
    """Fill advantage / return_target according to the algorithm."""
    if cfg.algo == "reinforce":
        g = monte_carlo_returns(traj.reward, cfg.gamma, traj.done)
        traj.return_target = g
        traj.advantage = g - traj.value
    else:
        adv, targets = compute_gae(traj.reward, traj.value, traj.bootstrap_value, cfg.gamma, cfg.gae_lambda, traj.done)
        traj.advantage = adv
        traj.return_target = targets
    return traj


def normalize(adv: np.ndarray) -> np.ndarray:
    if adv.size < 2:
        return adv
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def surrogate_terms(ratio, adv, clip_eps: float):
    """Elementwise min(rho * A, clip(rho, 1-eps, 1+eps) * A)."""
    return T.minimum(ratio * adv, T.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv)


def micro_loss(policy: AttentionPolicy, traj: Trajectory, idx: np.ndarray, adv: np.ndarray, cfg: TrainConfig):
    """Loss on one micro-batch (mean over its rows) and diagnostics."""
    market = None if traj.market is None else traj.market[idx]
    out = policy(traj.windows[idx], traj.masks[idx], market)
    logp = simplex.log_pdf_tensor(out.alpha, traj.pre_mask_action[idx])
    stats = {}
    if cfg.algo == "ppo":
        ratio = T.exp(logp - traj.old_log_prob[idx])
        stats["ratio"] = ratio.data
        pg = -surrogate_terms(ratio, adv, cfg.clip_eps).mean()
    else:
        pg = -(logp * adv).mean()
    diff = out.value - traj.return_target[idx]
    value_loss = (diff * diff).mean() * 0.5
    loss = pg + value_loss * cfg.value_coef
    ent = simplex.entropy_tensor(out.alpha).mean()
    if cfg.entropy_coef:
        loss = loss - ent * cfg.entropy_coef
    kl_val = 0.0
    if cfg.algo == "ppo":
        kl = simplex.kl_tensor(out.alpha, traj.old_alpha[idx]).mean()
        kl_val = kl.item()
        if cfg.kl_coef:
            loss = loss + kl * cfg.kl_coef
    stats.update(policy_loss=pg.item(), value_loss=value_loss.item(), entropy=ent.item(), kl=kl_val)
    return loss, stats


def policy_update(
    policy: AttentionPolicy,
    store: ParamStore,
    traj: Trajectory,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    epochs: int | None = None,
) -> dict:
    """Shared PPO/A2C/REINFORCE loop: shuffled minibatches, micro-batch gradient
    accumulation, one clipped Adam step per minibatch."""
    if traj.advantage is None:
        prepare_targets(traj, cfg)
    n = len(traj)
    mb = min(cfg.minibatch, n)
    epochs = cfg.epochs_per_update if epochs is None else epochs
    agg = {"policy_loss": [], "value_loss": [], "entropy": [], "kl": [], "grad_norm": []}
    ratios, skipped, first_ratio = [], 0, None
    for epoch in range(epochs):
        order = rng.permutation(n) if rng is not None else np.arange(n)
        for s in range(0, n, mb):
            batch = order[s : s + mb]
            adv_all = traj.advantage[batch]
            if cfg.normalize_advantages:
                adv_all = normalize(adv_all)
            store.zero_grad()
            ok = True
            for m in range(0, len(batch), cfg.microbatch):
                idx = batch[m : m + cfg.microbatch]
                loss, st = micro_loss(policy, traj, idx, adv_all[m : m + cfg.microbatch], cfg)
                if "ratio" in st:
                    if not np.all(np.isfinite(st["ratio"])):
                        ok = False
                        break
                    ratios.append(st["ratio"])
                if not math.isfinite(loss.item()):
                    ok = False
                    break
                (loss * (len(idx) / len(batch))).backward()
                for k in ("policy_loss", "value_loss", "entropy", "kl"):
                    agg[k].append(st[k])
            if epoch == 0 and s == 0 and ratios:
                first_ratio = float(np.max(np.abs(np.concatenate(ratios) - 1.0)))
            if not ok:
                skipped += 1
                store.zero_grad()
                continue
            agg["grad_norm"].append(adam_step(store, cfg.lr, cfg.clip_norm))
    stats = {k: float(np.mean(v)) if v else float("nan") for k, v in agg.items()}
    stats["skipped"] = skipped
    stats["mean_reward"] = float(traj.reward.mean())
    if ratios:
        stats["first_pass_ratio_dev"] = first_ratio
    return stats


def ppo_update(policy, store, traj, cfg: TrainConfig, rng=None, epochs=None) -> dict:
    assert cfg.algo == "ppo"
    return policy_update(policy, store, traj, cfg, rng, epochs)


def a2c_update(policy, store, traj, cfg: TrainConfig, rng=None, epochs=None) -> dict:
    assert cfg.algo == "a2c"
    return policy_update(policy, store, traj, cfg, rng, epochs)


def reinforce_update(policy, store, traj, cfg: TrainConfig, rng=None, epochs=None) -> dict:
    assert cfg.algo == "reinforce"
    return policy_update(policy, store, traj, cfg, rng, epochs)
