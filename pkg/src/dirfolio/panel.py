"""Long-format CSV ingestion, date x ticker panel construction and splits."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DataError,
    DuplicateKeyError,
    EmptyInputError,
    SchemaError,
    SplitError,
    WindowError,
)

REQUIRED_COLUMNS = ("Date", "ticker", "Close")
STD_EPS = 1e-8
PANEL_MAGIC = b"DIRFPNL\x00"
PANEL_VERSION = 1


@dataclass(frozen=True)
class RawPanelRow:
    date: pd.Timestamp
    ticker: str
    features: Mapping[str, float]


@dataclass
class PanelTensor:
    """Aligned T x N x F panel.

    ``z`` holds raw feature values until :func:`standardize_cross_section` has
    been applied (``standardized`` flag). ``raw_close`` keeps NaN for missing
    prices; ``simple_returns`` is zero wherever a return is undefined.
    """

    dates: pd.DatetimeIndex
    tickers: list[str]
    features: list[str]
    z: np.ndarray
    raw_close: np.ndarray
    simple_returns: np.ndarray
    mask: np.ndarray
    standardized: bool = False

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.z.shape  # type: ignore[return-value]

    @property
    def return_valid(self) -> np.ndarray:
        """True where r[t, i] is a real close-to-close return."""
        valid = np.zeros_like(self.mask, dtype=bool)
        valid[1:] = self.mask[1:] & self.mask[:-1]
        return valid


@dataclass(frozen=True)
class SplitSpec:
    """Chronological index ranges, inclusive on both ends."""

    train: tuple[int, int]
    test: tuple[int, int]
    validation: tuple[int, int] | None = None
    embargo_days: int = 0
    dates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"train": list(self.train), "test": list(self.test), "embargo_days": self.embargo_days}
        out["validation"] = list(self.validation) if self.validation else None
        out["dates"] = self.dates
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "SplitSpec":
        val = d.get("validation")
        return cls(
            train=tuple(d["train"]),
            test=tuple(d["test"]),
            validation=tuple(val) if val else None,
            embargo_days=int(d.get("embargo_days", 0)),
            dates=dict(d.get("dates", {})),
        )


# ---------------------------------------------------------------------------
# ingestion


def load_long_csv(path, schema: Sequence[str] | None = None) -> pd.DataFrame:
    """Read a long-format daily CSV.

    Returns one row per (Date, ticker) observation, i.e. the tabular form of a
    sequence of :class:`RawPanelRow`. Rows with unparseable dates or with every
    feature missing are dropped; the result is sorted by (Date, ticker).
    """
    path = Path(path)
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError as exc:
        raise EmptyInputError(f"{path}: empty file") from exc
    required = list(REQUIRED_COLUMNS) + [c for c in (schema or ()) if c not in REQUIRED_COLUMNS]
    for col in required:
        if col not in df.columns:
            raise SchemaError(f"{path}: missing required column {col!r}")
    if df.empty:
        raise EmptyInputError(f"{path}: no data rows")

    df["Date"] = pd.to_datetime(df["Date"], errors="coerce", format="mixed")
    df = df[df["Date"].notna()]
    df["ticker"] = df["ticker"].astype(str)
    feature_cols = [c for c in df.columns if c not in ("Date", "ticker")]
    df[feature_cols] = df[feature_cols].apply(pd.to_numeric, errors="coerce")
    df = df[df[feature_cols].notna().any(axis=1)]
    return df.sort_values(["Date", "ticker"], kind="mergesort").reset_index(drop=True)


def rows_to_frame(rows: Iterable[RawPanelRow]) -> pd.DataFrame:
    records = [{"Date": r.date, "ticker": r.ticker, **dict(r.features)} for r in rows]
    if not records:
        return pd.DataFrame(columns=["Date", "ticker"])
    df = pd.DataFrame.from_records(records)
    df["Date"] = pd.to_datetime(df["Date"])
    return df


def frame_to_rows(df: pd.DataFrame) -> list[RawPanelRow]:
    feats = [c for c in df.columns if c not in ("Date", "ticker")]
    return [
        RawPanelRow(date=row.Date, ticker=str(row.ticker), features={f: getattr(row, f) for f in feats})
        for row in df.itertuples(index=False)
    ]


# ---------------------------------------------------------------------------
# panel construction


def pivot_panel(rows, feature_list: Sequence[str], close_col: str = "Close") -> PanelTensor:
    """Reindex long rows onto the full date x ticker grid (pre-standardization)."""
    if not feature_list:
        raise SchemaError("feature_list must be nonempty")
    df = rows if isinstance(rows, pd.DataFrame) else rows_to_frame(rows)
    if df.empty:
        raise EmptyInputError("no rows to pivot")
    for col in list(feature_list) + [close_col]:
        if col not in df.columns:
            raise SchemaError(f"missing feature column {col!r}")

    dup = df.duplicated(["Date", "ticker"], keep="first")
    if dup.any():
        first = df.loc[dup.idxmax()]
        raise DuplicateKeyError(
            f"duplicate (date, ticker) pair: ({first['Date'].date()}, {first['ticker']})"
        )

    dates = pd.DatetimeIndex(sorted(df["Date"].unique()))
    tickers = sorted(df["ticker"].unique().tolist())
    t_idx = dates.get_indexer(df["Date"])
    i_idx = pd.Index(tickers).get_indexer(df["ticker"])
    T, N, F = len(dates), len(tickers), len(feature_list)

    x = np.full((T, N, F), np.nan)
    vals = df[list(feature_list)].to_numpy(dtype=np.float64)
    x[t_idx, i_idx, :] = vals
    close = np.full((T, N), np.nan)
    close[t_idx, i_idx] = df[close_col].to_numpy(dtype=np.float64)
    mask = np.isfinite(close)
    return PanelTensor(
        dates=dates,
        tickers=tickers,
        features=list(feature_list),
        z=x,
        raw_close=close,
        simple_returns=np.zeros((T, N)),
        mask=mask,
    )


def flatten_panel(panel: PanelTensor) -> pd.DataFrame:
    """Inverse of :func:`pivot_panel` for cells that hold a value."""
    T, N, F = panel.shape
    tt, ii = np.meshgrid(np.arange(T), np.arange(N), indexing="ij")
    frame = pd.DataFrame({"Date": panel.dates[tt.ravel()], "ticker": np.asarray(panel.tickers)[ii.ravel()]})
    for k, name in enumerate(panel.features):
        frame[name] = panel.z[:, :, k].ravel()
    keep = np.isfinite(panel.z).any(axis=2).ravel()
    return frame[keep].reset_index(drop=True)


def compute_returns(close: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Log and simple close-to-close returns; NaN marks undefined entries."""
    close = np.asarray(close, dtype=np.float64)
    if close.ndim != 2 or close.shape[0] < 2:
        raise DataError("close must be a T x N matrix with T >= 2")
    bad = np.isfinite(close) & (close <= 0)
    if bad.any():
        t, i = np.argwhere(bad)[0]
        raise DataError(f"nonpositive close at (t={t}, i={i}): {close[t, i]}")
    lr = np.full_like(close, np.nan)
    with np.errstate(invalid="ignore"):
        lr[1:] = np.log(close[1:] / close[:-1])
    simple = np.expm1(lr)
    return lr, simple


def standardize_cross_section(panel: PanelTensor) -> PanelTensor:
    """Same-day z-scores over tradable names: (x - mu) / (sigma + 1e-8).

    sigma is the population standard deviation. Masked and non-finite cells
    come out as 0.
    """
    x = np.where(panel.mask[:, :, None], panel.z, np.nan)
    finite = np.isfinite(x)
    cnt = finite.sum(axis=1, keepdims=True)
    x0 = np.where(finite, x, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = x0.sum(axis=1, keepdims=True) / cnt
        dev = np.where(finite, x - mu, 0.0)
        sigma = np.sqrt((dev * dev).sum(axis=1, keepdims=True) / cnt)
        z = dev / (sigma + STD_EPS)
    z = np.where(finite & np.isfinite(z), z, 0.0)
    return replace(panel, z=z, standardized=True)


def build_panel(rows, feature_list: Sequence[str], close_col: str = "Close") -> PanelTensor:
    """pivot -> returns -> cross-sectional z-scores."""
    panel = pivot_panel(rows, feature_list, close_col=close_col)
    _, simple = compute_returns(panel.raw_close)
    panel.simple_returns = np.where(np.isfinite(simple), simple, 0.0)
    return standardize_cross_section(panel)


# ---------------------------------------------------------------------------
# splits and windows


def make_splits(
    dates,
    mode: str = "quantile_80",
    embargo_days: int = 0,
    ranges: Mapping[str, tuple[str, str]] | None = None,
) -> SplitSpec:
    """Chronological train/(validation)/test split with an embargo gap.

    ``mode`` is ``quantile_80``, ``twenty_year`` (falls back to the 80th time
    quantile when the 20-year mark lies beyond the sample) or ``fixed_ranges``
    (``ranges`` maps train/validation/test to inclusive date bounds).
    """
    dates = pd.DatetimeIndex(dates)
    T = len(dates)
    if T < 3:
        raise SplitError("need at least 3 dates")
    if embargo_days < 0:
        raise SplitError("embargo_days must be nonnegative")

    def quantile_cut() -> int:
        ns = dates.asi8.astype(np.float64)
        q = np.quantile(ns, 0.8)
        return int(np.searchsorted(ns, q, side="left"))

    validation = None
    if mode == "quantile_80":
        cut = quantile_cut()
        train, test = (0, cut - 1), (cut + embargo_days, T - 1)
    elif mode == "twenty_year":
        t_star = dates[0] + pd.DateOffset(years=20)
        cut = int(dates.searchsorted(t_star, side="left")) if t_star <= dates[-1] else quantile_cut()
        train, test = (0, cut - 1), (cut + embargo_days, T - 1)
    elif mode == "fixed_ranges":
        if not ranges or "train" not in ranges or "test" not in ranges:
            raise SplitError("fixed_ranges requires train and test date ranges")

        def span(key):
            lo, hi = (pd.Timestamp(v) for v in ranges[key])
            a = int(dates.searchsorted(lo, side="left"))
            b = int(dates.searchsorted(hi, side="right")) - 1
            return a, b

        train = span("train")
        prev_end = train[1]
        if ranges.get("validation"):
            va, vb = span("validation")
            va = max(va, prev_end + 1 + embargo_days)
            validation = (va, vb)
            prev_end = vb
        ta, tb = span("test")
        test = (max(ta, prev_end + 1 + embargo_days), tb)
    else:
        raise SplitError(f"unknown split mode {mode!r}")

    for name, rng in (("train", train), ("validation", validation), ("test", test)):
        if rng is not None and rng[1] < rng[0]:
            raise SplitError(f"empty {name} range")
    stamp = lambda r: [str(dates[r[0]].date()), str(dates[r[1]].date())] if r else None  # noqa: E731
    return SplitSpec(
        train=train,
        test=test,
        validation=validation,
        embargo_days=embargo_days,
        dates={"train": stamp(train), "validation": stamp(validation), "test": stamp(test)},
    )


def window_view(panel: PanelTensor, t: int, W: int) -> tuple[np.ndarray, np.ndarray]:
    """Read-only z[t-W+1 .. t] (W x N x F) and mask[t]."""
    if W < 1:
        raise WindowError("window length must be >= 1")
    if t < W - 1 or t >= panel.z.shape[0]:
        raise WindowError(f"day {t} cannot host a window of length {W}")
    win = panel.z[t - W + 1 : t + 1].view()
    win.flags.writeable = False
    m = panel.mask[t].view()
    m.flags.writeable = False
    return win, m


# ---------------------------------------------------------------------------
# persistence: panel.bin + manifest.json
#
# panel.bin layout (little-endian):
#   8 bytes  magic  b"DIRFPNL\0"
#   u32      version
#   u32 x 3  T, N, F
#   f64[T*N*F]  z (C order)
#   f64[T*N]    raw_close, missing stored as 0.0 (consult mask)
#   f64[T*N]    simple_returns
#   u8[T*N]     mask


def save_panel(panel: PanelTensor, out_dir, split: SplitSpec | None = None, extra: Mapping | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    T, N, F = panel.shape
    close = np.where(panel.mask, panel.raw_close, 0.0)
    with open(out / "panel.bin", "wb") as fh:
        fh.write(PANEL_MAGIC)
        fh.write(struct.pack("<IIII", PANEL_VERSION, T, N, F))
        for arr, dt in ((panel.z, "<f8"), (close, "<f8"), (panel.simple_returns, "<f8"), (panel.mask, "u1")):
            fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())
    manifest = {
        "format": "dirfolio-panel",
        "version": PANEL_VERSION,
        "T": T,
        "N": N,
        "F": F,
        "dates": [str(d.date()) for d in panel.dates],
        "tickers": list(panel.tickers),
        "features": list(panel.features),
        "avg_tradable": float(panel.mask.sum(axis=1).mean()),
        "split": split.to_dict() if split else None,
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_panel(panel_dir) -> tuple[PanelTensor, dict]:
    d = Path(panel_dir)
    manifest = json.loads((d / "manifest.json").read_text())
    raw = (d / "panel.bin").read_bytes()
    if raw[:8] != PANEL_MAGIC:
        raise DataError(f"{d / 'panel.bin'}: bad magic")
    version, T, N, F = struct.unpack("<IIII", raw[8:24])
    if version != PANEL_VERSION:
        raise DataError(f"unsupported panel version {version}")
    off = 24

    def take(count, dt):
        nonlocal off
        width = np.dtype(dt).itemsize
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=off).copy()
        off += count * width
        return arr

    z = take(T * N * F, "<f8").reshape(T, N, F)
    close = take(T * N, "<f8").reshape(T, N)
    rets = take(T * N, "<f8").reshape(T, N)
    mask = take(T * N, "u1").reshape(T, N).astype(bool)
    panel = PanelTensor(
        dates=pd.DatetimeIndex(pd.to_datetime(manifest["dates"])),
        tickers=list(manifest["tickers"]),
        features=list(manifest["features"]),
        z=z,
        raw_close=np.where(mask, close, np.nan),
        simple_returns=rets,
        mask=mask,
        standardized=True,
    )
    return panel, manifest
