"""Planted-signal synthetic markets for acceptance and smoke testing.

Two variants:

``own``
    Feature ``signal`` of asset i at day t predicts r[t+1, i]:
    r = drift + vol * (ic * s + sqrt(1 - ic^2) * e), so corr(s, r_next) = ic.
``lead_lag``
    Assets 0 and 1 are flagged leaders of groups +1 and -1; every other asset
    carries a visible group label and its next return loads on the signal of
    its group's leader:
    r[t+1, i] = drift + vol * (ic * s_leader(i)[t] + sqrt(1 - ic^2) * e).
    Followers' own signals are noise and leader returns are unpredictable, so
    the edge is only reachable by looking across the cross-section.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError
from .panel import build_panel, make_splits, save_panel
from .seeding import stream

VARIANTS = ("own", "lead_lag")


@dataclass
class SyntheticSpec:
    n_assets: int = 10
    n_days: int = 3000
    ic: float = 0.3
    vol: float = 0.01
    drift: float = 2e-4
    mask_prob: float = 0.002
    seed: int = 0
    variant: str = "own"
    start_date: str = "2000-01-03"

    def validate(self) -> "SyntheticSpec":
        if self.n_assets < 2 or self.n_days < 10:
            raise ConfigError("need n_assets >= 2 and n_days >= 10")
        if not -1 < self.ic < 1:
            raise ConfigError("ic must lie in (-1, 1)")
        if self.vol <= 0 or not 0 <= self.mask_prob < 1:
            raise ConfigError("vol must be > 0 and mask_prob in [0, 1)")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.variant == "lead_lag" and self.n_assets < 4:
            raise ConfigError("lead_lag needs n_assets >= 4")
        return self

    @property
    def features(self) -> list[str]:
        if self.variant == "own":
            return ["signal", "noise1", "noise2", "ret1"]
        return ["signal", "leader", "group", "ret1"]


def lead_lag_layout(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Group labels (+1 / -1) and leader flags: assets 0 and 1 lead groups +1
    and -1, the rest alternate between the groups."""
    grp = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    is_lead = np.arange(n) < 2
    return grp, is_lead


@dataclass
class SyntheticMarket:
    frame: pd.DataFrame  # long format, Date/ticker/features/Close
    signal: np.ndarray  # T x N raw planted signal (before masking)
    returns: np.ndarray  # T x N simple returns, row t earned from t-1 to t
    mask: np.ndarray
    spec: SyntheticSpec


def generate(spec: SyntheticSpec) -> SyntheticMarket:
    spec.validate()
    rng = stream(spec.seed, "datagen")
    T, N = spec.n_days, spec.n_assets
    rho, vol = spec.ic, spec.vol
    s = rng.standard_normal((T, N))
    e = rng.standard_normal((T, N))
    noise = rng.standard_normal((T, N, 2))
    r = np.zeros((T, N))
    if spec.variant == "own":
        r[1:] = spec.drift + vol * (rho * s[:-1] + math.sqrt(1 - rho * rho) * e[1:])
    else:
        # each follower loads on the signal of the leader sharing its group
        grp, is_lead = lead_lag_layout(N)
        src = np.where(grp > 0, 0, 1)
        follow = ~is_lead
        r[1:, follow] = spec.drift + vol * (rho * s[:-1][:, src[follow]] + math.sqrt(1 - rho * rho) * e[1:, follow])
        r[1:, is_lead] = spec.drift + vol * e[1:, is_lead]
    close = 100.0 * np.cumprod(1.0 + r, axis=0)

    mask = rng.random((T, N)) >= spec.mask_prob
    mask[0] = True
    dates = pd.bdate_range(spec.start_date, periods=T)
    tickers = [f"S{i:03d}" for i in range(N)]
    ret1 = np.vstack([np.full((1, N), np.nan), close[1:] / close[:-1] - 1.0])
    # lagged return spanning a missing day is unknown
    gap = np.vstack([np.ones((1, N), bool), mask[:-1]])
    ret1 = np.where(gap, ret1, np.nan)

    if spec.variant == "own":
        cols = {"signal": s, "noise1": noise[..., 0], "noise2": noise[..., 1], "ret1": ret1}
    else:
        grp, is_lead = lead_lag_layout(N)
        flag = np.broadcast_to(is_lead.astype(float), (T, N))
        group = np.broadcast_to(grp, (T, N))
        cols = {"signal": s, "leader": flag, "group": group, "ret1": ret1}
    tt, ii = np.nonzero(mask)
    frame = pd.DataFrame({"Date": dates[tt], "ticker": np.asarray(tickers)[ii]})
    for name in spec.features:
        frame[name] = cols[name][tt, ii]
    frame["Close"] = close[tt, ii]
    return SyntheticMarket(frame=frame, signal=s, returns=r, mask=mask, spec=spec)


def realized_ic(signal: np.ndarray, returns: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Pooled correlation of signal[t] with returns[t+1] over valid pairs."""
    x = signal[:-1]
    y = returns[1:]
    ok = np.isfinite(x) & np.isfinite(y)
    if mask is not None:
        ok &= mask[:-1] & mask[1:]
    return float(np.corrcoef(x[ok], y[ok])[0, 1])


def planted_ic(m: SyntheticMarket) -> float:
    """Realized IC of the planted channel (for ``lead_lag``: each follower's
    return against its leader's signal)."""
    if m.spec.variant == "own":
        return realized_ic(m.signal, m.returns, m.mask)
    grp, is_lead = lead_lag_layout(m.spec.n_assets)
    src = np.where(grp > 0, 0, 1)[~is_lead]
    lead = m.signal[:, src]
    both = m.mask[:, ~is_lead] & m.mask[:, src]
    return realized_ic(lead, m.returns[:, ~is_lead], both)


def write_synthetic(spec: SyntheticSpec, out_dir, split_mode: str = "quantile_80", embargo_days: int = 0, config_text: str | None = None) -> Path:
    """Generate the market and persist it as a prepared panel (plus the raw CSV)."""
    m = generate(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    m.frame.to_csv(out / "data.csv", index=False, float_format="%.17g")
    panel = build_panel(m.frame, spec.features)
    split = make_splits(panel.dates, split_mode, embargo_days)
    save_panel(panel, out, split, extra={"synthetic": {**asdict(spec), "realized_ic": planted_ic(m)}})
    if config_text is not None:
        (out / "config.ini").write_text(config_text)
    return out
