"""Run configuration: an INI file whose sections mirror the sub-configs.

Sections: ``data``, ``env``, ``policy``, ``train``, ``eval``. Unknown keys are
rejected so typos do not silently fall back to defaults.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .env import EnvConfig
from .errors import ConfigError
from .policy import PolicyConfig
from .train.algos import TrainConfig

# fields whose default is None but which take a number when set
OPTIONAL_FLOAT = {"caps"}


@dataclass
class DataConfig:
    path: str = ""
    features: str = ""  # comma list; empty = every non-key column in file order
    close_col: str = "Close"
    split_mode: str = "quantile_80"
    embargo_days: int = -1  # -1 means "use the state window length"
    train_range: str = ""  # "YYYY-MM-DD:YYYY-MM-DD" for fixed_ranges
    validation_range: str = ""
    test_range: str = ""

    def feature_list(self) -> list[str] | None:
        names = [f.strip() for f in self.features.split(",") if f.strip()]
        return names or None

    def ranges(self) -> dict[str, tuple[str, str]]:
        out = {}
        for key in ("train", "validation", "test"):
            raw = getattr(self, f"{key}_range").strip()
            if raw:
                lo, sep, hi = raw.partition(":")
                if not sep:
                    raise ConfigError(f"{key}_range must be 'from:to', got {raw!r}")
                out[key] = (lo.strip(), hi.strip())
        return out


@dataclass
class EvalConfig:
    range: str = "test"
    baselines: str = "equal_weight_buy_and_hold,all_cash"
    periods_per_year: int = 252

    def baseline_list(self) -> list[str]:
        return [b.strip() for b in self.baselines.split(",") if b.strip()]


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    SECTIONS = ("data", "env", "policy", "train", "eval")

    def validate(self) -> "RunConfig":
        self.env.validate()
        self.policy.validate()
        self.train.validate()
        return self

    @property
    def embargo(self) -> int:
        return self.env.window if self.data.embargo_days < 0 else self.data.embargo_days

    def to_ini(self) -> str:
        lines = []
        for sec in self.SECTIONS:
            lines.append(f"[{sec}]")
            for k, v in asdict(getattr(self, sec)).items():
                lines.append(f"{k} = {_fmt(v)}")
            lines.append("")
        return "\n".join(lines)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_ini())
        return path


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(name: str, default, raw: str):
    raw = raw.strip()
    try:
        if name in OPTIONAL_FLOAT:
            return None if raw.lower() in ("", "none") else float(raw)
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


def _fill(obj, section: configparser.SectionProxy | None, sec_name: str):
    if section is None:
        return obj
    known = {f.name for f in fields(obj)}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{sec_name}]")
        setattr(obj, key, _coerce(key, getattr(obj, key), raw))
    return obj


def parse_config(text: str, allow_extra_sections: bool = True) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case (L_time, K)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if not allow_extra_sections:
        extra = set(cp.sections()) - set(RunConfig.SECTIONS)
        if extra:
            raise ConfigError(f"unknown sections: {sorted(extra)}")
    cfg = RunConfig()
    for sec in RunConfig.SECTIONS:
        _fill(getattr(cfg, sec), cp[sec] if cp.has_section(sec) else None, sec)
    return cfg.validate()


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text())


def read_section(path, name: str) -> dict[str, str]:
    """Raw key/value pairs of one section (used for grid and synthetic specs)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"file not found: {p}")
    try:
        cp.read_string(p.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    if not cp.has_section(name):
        raise ConfigError(f"{p} has no [{name}] section")
    return dict(cp[name].items())
