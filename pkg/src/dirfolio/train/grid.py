"""Grid-search fine-tuning from a pretrained checkpoint."""
from __future__ import annotations

import itertools
import json
from dataclasses import replace
from pathlib import Path

from ..backtest import evaluate_policy
from ..env import EnvConfig
from ..errors import ConfigError
from ..metrics import compute_metrics
from ..panel import PanelTensor, SplitSpec
from .algos import TrainConfig
from .trainer import Trainer, policy_from_checkpoint

METRICS = ("sharpe", "cagr", "mdd")
GRID_KEYS = ("lr", "epochs", "minibatch")
SUMMARY_COLUMNS = ["algo", "lr", "epochs", "mb", "mb_micro", "extra_updates", "sharpe", "cagr", "mdd"]


def grid_cells(grid: dict) -> list[dict]:
    """Cartesian product in lexicographic order of (lr, epochs, minibatch) as listed."""
    missing = [k for k in GRID_KEYS if k not in grid]
    if missing:
        raise ConfigError(f"grid lacks {missing}")
    return [dict(zip(GRID_KEYS, combo)) for combo in itertools.product(*(grid[k] for k in GRID_KEYS))]


def rank_trials(trials: list[dict], metric: str) -> list[dict]:
    """Best first. Higher is better for every metric (mdd is <= 0). The sort is
    stable, so ties keep grid order."""
    if metric not in METRICS:
        raise ConfigError(f"eval_metric must be one of {METRICS}")
    return sorted(trials, key=lambda t: -t[metric])


def grid_search_finetune(
    checkpoint,
    panel: PanelTensor,
    split: SplitSpec,
    grid: dict,
    eval_metric: str = "sharpe",
    extra_updates: int = 6,
    eval_range: tuple[int, int] | None = None,
    out_dir=None,
    microbatch: int | None = None,
) -> tuple[list[dict], Path | None]:
    """Every cell restarts from ``checkpoint`` (weights and Adam state), runs
    ``extra_updates`` updates with the cell's lr/epochs/minibatch, then gets a
    deterministic evaluation. Returns trials ranked by ``eval_metric`` and the
    path of the persisted best checkpoint."""
    cells = grid_cells(grid)
    if eval_metric not in METRICS:
        raise ConfigError(f"eval_metric must be one of {METRICS}")
    _, meta = policy_from_checkpoint(checkpoint)
    env_cfg = EnvConfig(**meta["env"])
    base_cfg = TrainConfig(**meta["train"])
    lo, hi = eval_range if eval_range is not None else split.test
    out = Path(out_dir) if out_dir is not None else None

    trials = []
    for k, cell in enumerate(cells):
        policy, store, _ = policy_from_checkpoint(checkpoint, with_store=True)
        cfg = replace(
            base_cfg,
            lr=float(cell["lr"]),
            epochs_per_update=int(cell["epochs"]),
            minibatch=int(cell["minibatch"]),
            microbatch=int(microbatch or base_cfg.microbatch),
        )
        trainer = Trainer(panel, split, env_cfg, policy.config, cfg, policy=policy, store=store, stream_name="finetune")
        trainer.run(extra_updates)
        series, _ = evaluate_policy(policy, panel, env_cfg, lo, hi)
        rep = compute_metrics(series)
        trial = {
            "trial": k,
            "algo": cfg.algo,
            "lr": cfg.lr,
            "epochs": cfg.epochs_per_update,
            "mb": cfg.minibatch,
            "mb_micro": cfg.microbatch,
            "extra_updates": extra_updates,
            "sharpe": rep.sharpe,
            "cagr": rep.cagr,
            "mdd": rep.mdd,
            "terminal_wealth": rep.terminal_wealth,
            "eval_range": [int(lo), int(hi)],
        }
        if out is not None:
            path = out / "checkpoints" / f"finetune_trial_{k:02d}.ckpt"
            trainer.save(path, finetune=trial)
            trial["checkpoint"] = str(path)
        trials.append(trial)

    ranked = rank_trials(trials, eval_metric)
    best_path = None
    if out is not None:
        best_path = out / "checkpoints" / "finetune_best.ckpt"
        best_path.write_bytes(Path(ranked[0]["checkpoint"]).read_bytes())
        reports = out / "reports"
        reports.mkdir(parents=True, exist_ok=True)
        (reports / "finetune_trials.json").write_text(json.dumps(trials, indent=2) + "\n")
        (reports / "finetune_summary.txt").write_text(format_summary(ranked))
    return ranked, best_path


def format_summary(ranked: list[dict]) -> str:
    rows = [SUMMARY_COLUMNS]
    for t in ranked:
        rows.append([
            t["algo"],
            f"{t['lr']:g}",
            str(t["epochs"]),
            str(t["mb"]),
            str(t["mb_micro"]),
            str(t["extra_updates"]),
            f"{t['sharpe']:.4f}",
            f"{t['cagr']:.4f}",
            f"{t['mdd']:.4f}",
        ])
    widths = [max(len(r[j]) for r in rows) for j in range(len(SUMMARY_COLUMNS))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def parse_grid(section: dict) -> tuple[dict, dict]:
    """``[grid]`` section -> (value lists, options). Lists are comma separated."""
    grid, opts = {}, {}
    conv = {"lr": float, "epochs": int, "minibatch": int}
    for key, raw in section.items():
        if key in conv:
            try:
                grid[key] = [conv[key](v) for v in raw.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"bad grid values for {key}: {raw!r}") from exc
            if not grid[key]:
                raise ConfigError(f"empty grid axis {key}")
        elif key in ("metric", "range"):
            opts[key] = raw.strip()
        elif key in ("updates", "microbatch"):
            opts[key] = int(raw)
        else:
            raise ConfigError(f"unknown grid key {key!r}")
    if any(k not in grid for k in GRID_KEYS):
        raise ConfigError(f"grid needs all of {GRID_KEYS}")
    return grid, opts
