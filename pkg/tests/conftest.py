from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from dirfolio.panel import build_panel, make_splits
from dirfolio.policy import PolicyConfig, build_policy


def long_frame(close: np.ndarray, features: dict | None = None, start: str = "2020-01-01") -> pd.DataFrame:
    """Long-format frame from a T x N close matrix (NaN = absent row)."""
    T, N = close.shape
    dates = pd.bdate_range(start, periods=T)
    recs = []
    for t in range(T):
        for i in range(N):
            if not np.isfinite(close[t, i]):
                continue
            row = {"Date": dates[t], "ticker": f"T{i}", "Close": close[t, i]}
            for name, arr in (features or {}).items():
                row[name] = arr[t, i]
            recs.append(row)
    return pd.DataFrame.from_records(recs)


def random_market(T: int = 80, N: int = 4, F: int = 2, seed: int = 0, holes: float = 0.0):
    rng = np.random.default_rng(seed)
    r = 0.01 * rng.standard_normal((T, N))
    close = 100 * np.cumprod(1 + r, axis=0)
    if holes:
        drop = rng.random((T, N)) < holes
        drop[0] = False
        drop[:, 0] = False  # keep one name alive every day
        close[drop] = np.nan
    feats = {f"f{k}": rng.standard_normal((T, N)) for k in range(F)}
    return long_frame(close, feats), [f"f{k}" for k in range(F)]


@pytest.fixture
def small_panel():
    df, feats = random_market(T=80, N=4, F=2, seed=1, holes=0.05)
    panel = build_panel(df, feats)
    split = make_splits(panel.dates, "quantile_80", 3)
    return panel, split


@pytest.fixture
def tiny_policy():
    cfg = PolicyConfig(d=8, heads=2, L_cross=1)
    return build_policy(cfg, 2, seed=0)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines at the end of the run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
