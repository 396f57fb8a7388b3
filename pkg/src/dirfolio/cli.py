"""Command-line entry point.

    dirfolio prepare   --data <csv> --config <file> --out <dir>
    dirfolio train     --panel <dir> --algo {ppo|a2c|reinforce} --seed <n>
    dirfolio evaluate  --checkpoint <file> | --baseline <name>  --range <from:to>
    dirfolio finetune  --checkpoint <file> --grid <file>
    dirfolio synthetic --spec <file>

Every artifact lives under one run directory:
manifest.json, panel.bin, config.ini, checkpoints/, logs/, reports/.
On failure the last stderr line reads ``error[<category>]: <message>``.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace
from pathlib import Path

from .backtest import BASELINES, evaluate_baseline, evaluate_policy, parse_range
from .config import RunConfig, load_config, parse_config, read_section
from .env import EnvConfig
from .errors import ConfigError, DirfolioError
from .metrics import compute_metrics, drawdown_curve, format_table, write_curve_csv, write_report_json
from .panel import SplitSpec, build_panel, load_long_csv, load_panel, make_splits, save_panel
from .synthetic import SyntheticSpec, write_synthetic
from .train import ALGOS, Trainer, grid_search_finetune, policy_from_checkpoint
from .train.grid import parse_grid

IO_EXIT = 8


def _open_run(panel_dir) -> tuple[Path, RunConfig, object, SplitSpec]:
    run = Path(panel_dir)
    if not (run / "manifest.json").exists():
        raise ConfigError(f"{run} is not a prepared run directory (no manifest.json)")
    cfg_path = run / "config.ini"
    cfg = load_config(cfg_path) if cfg_path.exists() else RunConfig()
    panel, manifest = load_panel(run)
    if not manifest.get("split"):
        raise ConfigError(f"{run}/manifest.json has no split")
    return run, cfg, panel, SplitSpec.from_dict(manifest["split"])


def _run_dir_of(checkpoint) -> Path:
    # checkpoints sit in <run>/checkpoints/
    return Path(checkpoint).resolve().parent.parent


# ---------------------------------------------------------------------------
# commands


def cmd_prepare(args) -> int:
    cfg = load_config(args.config)
    data = Path(args.data)
    df = load_long_csv(data)
    feats = cfg.data.feature_list() or [c for c in df.columns if c not in ("Date", "ticker")]
    panel = build_panel(df, feats, close_col=cfg.data.close_col)
    split = make_splits(panel.dates, cfg.data.split_mode, cfg.embargo, cfg.data.ranges())
    out = Path(args.out)
    cfg.data.path = str(data)
    cfg.data.features = ",".join(feats)
    save_panel(panel, out, split, extra={"source": data.name})
    cfg.save(out / "config.ini")
    T, N, F = panel.shape
    print(f"prepared {out}: T={T} N={N} F={F} train={split.dates['train']} test={split.dates['test']}")
    return 0


def cmd_train(args) -> int:
    run, cfg, panel, split = _open_run(args.panel)
    if args.config:
        cfg = load_config(args.config)
    tc = replace(cfg.train, algo=args.algo or cfg.train.algo)
    if args.seed is not None:
        tc.seed = args.seed
    if args.updates is not None:
        tc.n_updates = args.updates
    trainer = Trainer(panel, split, cfg.env, cfg.policy, tc.validate(), out_dir=run, strict_access=args.strict_access)
    result = trainer.run()
    acc = result.access
    print(f"trained {tc.algo} seed={tc.seed} updates={trainer.updates_done} -> {result.checkpoint}")
    print(f"panel reads: {acc['reads']} (test-range reads: {acc['test_reads']})")
    return 0


def _report(name: str, series, out: Path, periods: int):
    rep = compute_metrics(series, periods)
    reports = out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    write_report_json(rep, reports / f"{name}_metrics.json")
    write_curve_csv(series.dates, series.equity, reports / f"{name}_equity.csv", "equity")
    write_curve_csv(series.dates, drawdown_curve(series.equity), reports / f"{name}_drawdown.csv", "drawdown")
    return rep


def cmd_evaluate(args) -> int:
    if bool(args.checkpoint) == bool(args.baseline):
        raise ConfigError("give exactly one of --checkpoint or --baseline")
    if args.panel:
        panel_dir = Path(args.panel)
    elif args.checkpoint:
        panel_dir = _run_dir_of(args.checkpoint)
    else:
        raise ConfigError("--baseline needs --panel")
    run, cfg, panel, split = _open_run(panel_dir)
    lo, hi = parse_range(args.range or cfg.eval.range, panel, split)
    periods = cfg.eval.periods_per_year

    reports = {}
    if args.checkpoint:
        policy, meta = policy_from_checkpoint(args.checkpoint)
        env_cfg = EnvConfig(**meta["env"])
        series, _ = evaluate_policy(policy, panel, env_cfg, lo, hi)
        name = Path(args.checkpoint).stem
        reports[name] = _report(name, series, run, periods)
        # baselines share the range, cost level and panel
        names = [] if args.no_baselines else cfg.eval.baseline_list()
    else:
        env_cfg = cfg.env
        names = [args.baseline]
    for b in names:
        series, _ = evaluate_baseline(b, panel, env_cfg, lo, hi)
        reports[b] = _report(b, series, run, periods)

    table = format_table(reports)
    header = f"range {panel.dates[lo].date()}..{panel.dates[hi].date()} kappa={env_cfg.kappa:g}\n"
    tag = "comparison" if args.checkpoint else args.baseline
    (run / "reports" / f"{tag}_table.txt").write_text(header + table)
    print(header + table, end="")
    return 0


def cmd_finetune(args) -> int:
    run, cfg, panel, split = _open_run(args.panel or _run_dir_of(args.checkpoint))
    grid, opts = parse_grid(read_section(args.grid, "grid"))
    metric = opts.get("metric", "sharpe")
    eval_range = parse_range(opts["range"], panel, split) if "range" in opts else None
    ranked, best = grid_search_finetune(
        args.checkpoint,
        panel,
        split,
        grid,
        eval_metric=metric,
        extra_updates=opts.get("updates", cfg.train.finetune_updates),
        eval_range=eval_range,
        out_dir=run,
        microbatch=opts.get("microbatch"),
    )
    print((run / "reports" / "finetune_summary.txt").read_text(), end="")
    print(f"best ({metric}) -> {best}")
    return 0


def cmd_synthetic(args) -> int:
    raw = read_section(args.spec, "synthetic")
    text = Path(args.spec).read_text()
    out = raw.pop("out", None)
    out = args.out or out
    if not out:
        raise ConfigError("synthetic spec needs 'out' (or pass --out)")
    known = {f.name: f for f in fields(SyntheticSpec)}
    vals = {}
    for key, v in raw.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [synthetic]")
        default = getattr(SyntheticSpec(), key)
        try:
            vals[key] = type(default)(v.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {v!r}") from exc
    spec = SyntheticSpec(**vals).validate()
    cfg = parse_config(text)
    cfg.data.path = str(Path(out) / "data.csv")
    cfg.data.features = ",".join(spec.features)
    write_synthetic(spec, out, cfg.data.split_mode, cfg.embargo, cfg.to_ini())
    manifest = json.loads((Path(out) / "manifest.json").read_text())
    print(f"synthetic {spec.variant} market -> {out} (realized IC {manifest['synthetic']['realized_ic']:.4f})")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dirfolio", description="Dirichlet-policy portfolio RL engine")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("prepare", help="build the standardized panel and split manifest")
    sp.add_argument("--data", required=True)
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", help="train a policy on the train range")
    sp.add_argument("--panel", required=True, help="prepared run directory")
    sp.add_argument("--algo", choices=ALGOS)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--updates", type=int, help="override the configured update budget")
    sp.add_argument("--config", help="override the run directory's config.ini")
    sp.add_argument("--strict-access", action="store_true", help="raise on any test-range read")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="deterministic backtest of a checkpoint or baseline")
    sp.add_argument("--checkpoint")
    sp.add_argument("--baseline", choices=BASELINES)
    sp.add_argument("--range", help="from:to (dates or day indices) or train/validation/test")
    sp.add_argument("--panel", help="run directory (default: the checkpoint's)")
    sp.add_argument("--no-baselines", action="store_true")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("finetune", help="grid-search fine-tuning from a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--grid", required=True, help="INI file with a [grid] section")
    sp.add_argument("--panel")
    sp.set_defaults(func=cmd_finetune)

    sp = sub.add_parser("synthetic", help="generate a planted-signal market as a prepared run")
    sp.add_argument("--spec", required=True, help="INI file with a [synthetic] section")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_synthetic)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DirfolioError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return IO_EXIT


if __name__ == "__main__":
    sys.exit(main())
