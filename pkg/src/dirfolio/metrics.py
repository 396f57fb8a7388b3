"""Performance battery for a daily net-return series."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import kernels
from .errors import ParameterError


@dataclass
class ReturnSeries:
    dates: pd.DatetimeIndex
    net_returns: np.ndarray
    equity: np.ndarray

    @classmethod
    def from_returns(cls, returns, dates=None) -> "ReturnSeries":
        r = np.asarray(returns, dtype=np.float64)
        if dates is None:
            dates = pd.bdate_range("2000-01-03", periods=len(r))
        return cls(pd.DatetimeIndex(dates), r, np.cumprod(1.0 + r))

    def validate(self) -> "ReturnSeries":
        if len(self.net_returns) != len(self.equity) or len(self.dates) != len(self.net_returns):
            raise ParameterError("dates, returns and equity must have equal length")
        if np.any(self.equity <= 0):
            raise ParameterError("equity must stay positive")
        return self


# headline columns first, then the remaining fields
TABLE_COLUMNS = [
    ("terminal_wealth", "TW"),
    ("cagr", "CAGR"),
    ("ann_return", "Ann.Ret"),
    ("ann_vol", "Ann.Vol"),
    ("sharpe", "Sharpe"),
    ("sortino", "Sortino"),
    ("mdd", "MDD"),
    ("calmar", "Calmar"),
    ("hit_rate", "Hit"),
    ("avg_gain", "AvgGain"),
    ("avg_loss", "AvgLoss"),
    ("skewness", "Skew"),
    ("kurtosis", "Kurt"),
    ("var_5", "VaR5"),
    ("cvar_5", "CVaR5"),
    ("tail_ratio", "Tail"),
]


@dataclass
class MetricsReport:
    terminal_wealth: float
    cagr: float
    ann_return: float
    ann_vol: float
    sharpe: float
    sortino: float
    mdd: float
    calmar: float
    hit_rate: float
    avg_gain: float
    avg_loss: float
    skewness: float
    kurtosis: float
    var_5: float
    cvar_5: float
    tail_ratio: float
    n_days: int = 0
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        # JSON has no inf; store sentinels as strings
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = repr(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        vals = {k: (float(v) if isinstance(v, str) else v) for k, v in d.items() if k != "flags"}
        return cls(**vals, flags=list(d.get("flags", [])))


def drawdown_curve(equity) -> np.ndarray:
    """dd_t = equity_t / running max - 1."""
    eq = np.asarray(equity, dtype=np.float64)
    if eq.size == 0:
        return eq.copy()
    return kernels.drawdown(eq)


ZERO_DENOM = 1e-14  # below this a volatility / drawdown counts as zero


def _ratio(num: float, den: float, name: str, flags: list) -> float:
    if den > ZERO_DENOM:
        return num / den
    flags.append(f"{name}_undefined")
    return 0.0 if num == 0 else math.copysign(math.inf, num)


def compute_metrics(series: ReturnSeries, periods_per_year: int = 252) -> MetricsReport:
    r = np.asarray(series.net_returns, dtype=np.float64)
    if r.size < 2:
        raise ParameterError("need at least 2 observations")
    if not np.all(np.isfinite(r)) or np.any(r <= -1):
        raise ParameterError("returns must be finite and > -1")
    eq = np.asarray(series.equity, dtype=np.float64)
    if eq.shape != r.shape:
        raise ParameterError("equity and returns differ in length")
    if not np.allclose(eq, np.cumprod(1.0 + r), rtol=1e-9, atol=0):
        raise ParameterError("equity is inconsistent with returns")
    P = periods_per_year
    n = r.size
    flags: list = []

    tw = float(np.prod(1.0 + r))
    cagr = tw ** (P / n) - 1.0
    ann_ret = P * float(r.mean())
    sd = float(r.std(ddof=1))
    ann_vol = math.sqrt(P) * sd
    sharpe = _ratio(ann_ret, ann_vol, "sharpe", flags)
    downside = math.sqrt(P * float(np.mean(np.minimum(r, 0.0) ** 2)))
    sortino = _ratio(ann_ret, downside, "sortino", flags)
    mdd = float(drawdown_curve(eq).min())
    calmar = _ratio(cagr, abs(mdd), "calmar", flags)

    gains, losses = r[r > 0], r[r < 0]
    hit = float((r > 0).mean())
    avg_gain = float(gains.mean()) if gains.size else 0.0
    avg_loss = float(losses.mean()) if losses.size else 0.0

    centered = r - r.mean()
    m2 = float(np.mean(centered**2))
    if m2 > 0:
        skew = float(np.mean(centered**3)) / m2**1.5
        kurt = float(np.mean(centered**4)) / m2**2 - 3.0
    else:
        skew, kurt = 0.0, 0.0
        flags.append("moments_undefined")

    var5 = float(np.percentile(r, 5))
    cvar5 = float(r[r <= var5].mean())
    p95 = float(np.percentile(r, 95))
    tail = _ratio(abs(p95), abs(var5), "tail_ratio", flags)

    return MetricsReport(
        terminal_wealth=tw,
        cagr=cagr,
        ann_return=ann_ret,
        ann_vol=ann_vol,
        sharpe=sharpe,
        sortino=sortino,
        mdd=mdd,
        calmar=calmar,
        hit_rate=hit,
        avg_gain=avg_gain,
        avg_loss=avg_loss,
        skewness=skew,
        kurtosis=kurt,
        var_5=var5,
        cvar_5=cvar5,
        tail_ratio=tail,
        n_days=n,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# output


def write_report_json(report: MetricsReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def format_table(reports: dict[str, MetricsReport]) -> str:
    """Aligned text table, one row per strategy."""
    head = ["Strategy"] + [label for _, label in TABLE_COLUMNS]
    rows = [head]
    for name, rep in reports.items():
        rows.append([name] + [f"{getattr(rep, key):.4f}" for key, _ in TABLE_COLUMNS])
    widths = [max(len(row[j]) for row in rows) for j in range(len(head))]
    lines = []
    for k, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells))
        if k == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def write_curve_csv(dates, values, path, header: str = "value") -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["date", header])
        for d, v in zip(dates, values):
            wr.writerow([str(pd.Timestamp(d).date()), repr(float(v))])
