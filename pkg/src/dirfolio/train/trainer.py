"""Training loop: rollouts on the train range, updates, logging, checkpoints."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff.checkpoint import load_arrays, load_checkpoint, save_checkpoint
from ..autodiff.optim import ParamStore
from ..env import EnvConfig, PanelAccess, PortfolioEnv
from ..errors import RolloutError, TrainingError, VersionError
from ..panel import PanelTensor, SplitSpec
from ..policy import AttentionPolicy, PolicyConfig, build_policy
from ..seeding import stream
from .algos import TrainConfig, policy_update, prepare_targets
from .rollout import collect_rollout, concat_trajectories

LOG_COLUMNS = ["update", "mean_reward", "policy_loss", "value_loss", "kl", "entropy", "grad_norm", "wall_time"]
CHECKPOINT_FORMAT = "dirfolio-policy"


@dataclass
class TrainResult:
    log: list = field(default_factory=list)
    checkpoint: Path | None = None
    access: dict = field(default_factory=dict)


def checkpoint_meta(policy: AttentionPolicy, env_cfg: EnvConfig, train_cfg: TrainConfig, **extra) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "policy": policy.config_dict(),
        "env": asdict(env_cfg),
        "train": asdict(train_cfg),
        **extra,
    }


def policy_from_checkpoint(path, with_store: bool = False):
    """Rebuild the policy (and optionally its Adam state) from a checkpoint."""
    _, meta = load_arrays(path)
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise VersionError(f"{path}: not a policy checkpoint")
    pol_dict = dict(meta["policy"])
    n_features = pol_dict.pop("n_features")
    policy = AttentionPolicy(PolicyConfig(**pol_dict), n_features, np.random.default_rng(0))
    store = ParamStore(policy.named_parameters()) if with_store else None
    load_checkpoint(path, policy, store)
    if with_store:
        return policy, store, meta
    return policy, meta


class Trainer:
    """Owns one policy. Every panel read goes through a ``PanelAccess`` whose
    limit is the first test day, so leakage shows up in ``access.summary()``."""

    def __init__(
        self,
        panel: PanelTensor,
        split: SplitSpec,
        env_cfg: EnvConfig,
        policy_cfg: PolicyConfig,
        train_cfg: TrainConfig,
        out_dir=None,
        market: np.ndarray | None = None,
        policy: AttentionPolicy | None = None,
        store: ParamStore | None = None,
        stream_name: str = "rollout",
        strict_access: bool = False,
    ):
        self.panel = panel
        self.split = split
        self.env_cfg = env_cfg.validate()
        self.cfg = train_cfg.validate()
        self.policy = policy if policy is not None else build_policy(policy_cfg, panel.z.shape[2], train_cfg.seed)
        self.store = store if store is not None else ParamStore(self.policy.named_parameters())
        self.access = PanelAccess(panel, limit=split.test[0], strict=strict_access)
        lo, hi = split.train
        self.env = PortfolioEnv(panel, env_cfg, end=hi, access=self.access, market=market)
        self.lo = max(lo, env_cfg.warmup)
        self.hi = hi
        avail = hi - self.lo
        if avail < 2:
            raise RolloutError(f"train range [{lo}, {hi}] too short after warm-up {env_cfg.warmup}")
        self.days = min(train_cfg.rollout_days, avail)
        self.rng = stream(train_cfg.seed, stream_name)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.updates_done = 0
        self.log: list[dict] = []

    def _sample_start(self) -> int:
        return int(self.rng.integers(self.lo, self.hi - self.days + 1))

    def snapshot(self) -> tuple[dict, dict]:
        return (
            {k: v.copy() for k, v in self.policy.state_dict().items()},
            self.store.state(),
        )

    def restore(self, snap) -> None:
        params, opt = snap
        self.policy.load_state_dict(params)
        self.store.load_state(opt)

    def update(self, epochs: int | None = None) -> dict:
        """One update: enough rollout segments to fill a minibatch, then the
        configured number of passes over them."""
        segments = []
        for _ in range(self.segments_per_update):
            start = self._sample_start()
            traj = collect_rollout(self.env, self.policy, self.days, self.rng, start)
            segments.append(prepare_targets(traj, self.cfg))
        traj = concat_trajectories(segments)
        stats = policy_update(self.policy, self.store, traj, self.cfg, self.rng, epochs)
        self.updates_done += 1
        return stats

    @property
    def segments_per_update(self) -> int:
        return max(1, -(-self.cfg.minibatch // self.days))

    def save(self, path, **extra) -> Path:
        meta = checkpoint_meta(self.policy, self.env_cfg, self.cfg, updates=self.updates_done, **extra)
        return save_checkpoint(path, self.policy, self.store, meta)

    def run(self, n_updates: int | None = None, epochs: int | None = None, log_name: str = "train_log.csv", tag: str = "final") -> TrainResult:
        n_updates = self.cfg.n_updates if n_updates is None else n_updates
        ckpt_dir = log_dir = None
        if self.out_dir is not None:
            ckpt_dir = self.out_dir / "checkpoints"
            log_dir = self.out_dir / "logs"
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            log_dir.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        last_good = self.snapshot()
        for _ in range(n_updates):
            try:
                stats = self.update(epochs)
                bad = not (math.isfinite(stats["policy_loss"]) and math.isfinite(stats["value_loss"]))
                if bad:
                    raise TrainingError(f"non-finite loss at update {self.updates_done}")
            except TrainingError:
                self.restore(last_good)
                if ckpt_dir is not None:
                    self.save(ckpt_dir / "last_good.ckpt", aborted=True)
                    self._write_log(log_dir / log_name)
                raise
            last_good = self.snapshot()
            row = {"update": self.updates_done}
            for k in LOG_COLUMNS[1:-1]:
                row[k] = stats[k]
            row["wall_time"] = time.perf_counter() - t0
            self.log.append(row)
            every = self.cfg.checkpoint_every
            if ckpt_dir is not None and every and self.updates_done % every == 0:
                self.save(ckpt_dir / f"update_{self.updates_done:05d}.ckpt")
        result = TrainResult(log=self.log, access=self.access.summary())
        if self.out_dir is not None:
            result.checkpoint = self.save(ckpt_dir / f"{tag}.ckpt")
            self._write_log(log_dir / log_name)
            (log_dir / "access.json").write_text(json.dumps(result.access, indent=2, sort_keys=True) + "\n")
        return result

    def _write_log(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(LOG_COLUMNS)
            for row in self.log:
                wr.writerow([row["update"]] + [repr(float(row[k])) for k in LOG_COLUMNS[1:]])
