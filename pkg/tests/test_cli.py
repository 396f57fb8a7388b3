import json
import subprocess
import sys

import pytest

from dirfolio.cli import main

from conftest import random_market

CONFIG = """
[data]
embargo_days = 3
[env]
window = 5
[policy]
d = 8
heads = 2
[train]
rollout_days = 16
minibatch = 16
microbatch = 8
n_updates = 2
"""


@pytest.fixture
def csv_and_config(tmp_path):
    df, _ = random_market(T=120, N=3, F=2, seed=4, holes=0.05)
    data = tmp_path / "data.csv"
    df.to_csv(data, index=False)
    cfg = tmp_path / "run.ini"
    cfg.write_text(CONFIG)
    return data, cfg


@pytest.fixture
def prepared(tmp_path, csv_and_config):
    data, cfg = csv_and_config
    run = tmp_path / "run"
    assert main(["prepare", "--data", str(data), "--config", str(cfg), "--out", str(run)]) == 0
    return run


def test_prepare(prepared, csv_and_config, tmp_path):
    man = json.loads((prepared / "manifest.json").read_text())
    # no feature list configured: every non-key column, Close included
    assert man["N"] == 3 and man["T"] == 120 and man["F"] == 3
    assert man["features"] == ["Close", "f0", "f1"]
    data, cfg = csv_and_config
    again = tmp_path / "again"
    assert main(["prepare", "--data", str(data), "--config", str(cfg), "--out", str(again)]) == 0
    for name in ("panel.bin", "manifest.json", "config.ini"):
        assert (prepared / name).read_bytes() == (again / name).read_bytes()


def test_train_evaluate_finetune(prepared, capsys, tmp_path):
    assert main(["train", "--panel", str(prepared), "--algo", "a2c", "--seed", "42", "--strict-access"]) == 0
    out = capsys.readouterr().out
    assert "test-range reads: 0" in out
    ckpt = prepared / "checkpoints" / "final.ckpt"
    log = (prepared / "logs" / "train_log.csv").read_text().splitlines()
    assert len(log) == 3

    assert main(["evaluate", "--checkpoint", str(ckpt), "--range", "test"]) == 0
    table = capsys.readouterr().out
    assert "final" in table and "all_cash" in table and "equal_weight_buy_and_hold" in table
    rep = prepared / "reports"
    for name in ("final_metrics.json", "final_equity.csv", "final_drawdown.csv", "comparison_table.txt"):
        assert (rep / name).exists()
    first = (rep / "final_equity.csv").read_bytes()
    assert main(["evaluate", "--checkpoint", str(ckpt), "--no-baselines"]) == 0
    assert (rep / "final_equity.csv").read_bytes() == first

    assert main(["evaluate", "--baseline", "all_cash", "--panel", str(prepared), "--range", "10:60"]) == 0
    assert json.loads((rep / "all_cash_metrics.json").read_text())["terminal_wealth"] == 1.0

    grid = tmp_path / "grid.ini"
    grid.write_text("[grid]\nlr = 1e-3, 1e-4\nepochs = 1, 2\nminibatch = 8, 16\nupdates = 1\nmicrobatch = 8\n")
    capsys.readouterr()
    assert main(["finetune", "--checkpoint", str(ckpt), "--grid", str(grid)]) == 0
    lines = (rep / "finetune_summary.txt").read_text().splitlines()
    assert len(lines) == 2 + 8 and lines[0].split()[0] == "algo"
    assert (prepared / "checkpoints" / "finetune_best.ckpt").exists()


def test_synthetic_command(tmp_path):
    spec = tmp_path / "spec.ini"
    spec.write_text(f"[synthetic]\nn_assets = 4\nn_days = 150\nseed = 1\nout = {tmp_path / 'syn'}\n[env]\nwindow = 5\n")
    assert main(["synthetic", "--spec", str(spec)]) == 0
    man = json.loads((tmp_path / "syn" / "manifest.json").read_text())
    assert man["synthetic"]["n_assets"] == 4
    assert "window = 5" in (tmp_path / "syn" / "config.ini").read_text()
    spec.write_text("[synthetic]\nn_assets = 4\nbogus = 1\n")
    assert main(["synthetic", "--spec", str(spec), "--out", str(tmp_path / "x")]) == 5


def test_error_exit_codes(prepared, tmp_path, capsys):
    assert main(["evaluate", "--baseline", "all_cash", "--panel", str(prepared), "--range", "1990-01-01:1990-02-01"]) == 3
    assert "error[range]" in capsys.readouterr().err
    assert main(["train", "--panel", str(tmp_path / "nowhere")]) == 5
    assert "error[config]" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("Date,Close\n2020-01-01,1\n")
    cfg = tmp_path / "c.ini"
    cfg.write_text("")
    assert main(["prepare", "--data", str(bad), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "error[schema]" in capsys.readouterr().err
    assert main(["evaluate", "--checkpoint", str(prepared / "missing.ckpt"), "--panel", str(prepared)]) == 8
    assert "error[io]" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "dirfolio", "train", "--panel", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 5
    assert proc.stderr.strip().splitlines()[-1].startswith("error[config]:")
