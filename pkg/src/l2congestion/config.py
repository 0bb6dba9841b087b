"""Run configuration: a flat YAML mapping with validated defaults."""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

PATH_KEYS = ("panel", "shocks", "weights", "chain_shocks", "out_dir")
DATE_KEYS = ("london", "merge", "dencun", "confirmatory_start", "confirmatory_end", "cf_start", "cf_end")


@dataclass(frozen=True)
class RunConfig:
    panel: Path | None = None
    shocks: Path | None = None
    weights: Path | None = None
    chain_shocks: Path | None = None
    out_dir: Path = Path("out")

    london: dt.date = dt.date(2021, 8, 5)
    merge: dt.date = dt.date(2022, 9, 15)
    dencun: dt.date = dt.date(2024, 3, 13)
    confirmatory_start: dt.date = dt.date(2021, 8, 5)
    confirmatory_end: dt.date = dt.date(2024, 3, 12)
    cf_start: dt.date = dt.date(2023, 10, 28)
    cf_end: dt.date = dt.date(2024, 3, 12)

    hac_lag_levels: int = 10
    hac_lag_diff: int = 7
    knot: float = 0.80
    fdr_family: tuple = ("log_basefee", "log_scarcity")
    demand_variant: str = "full"
    winsor_tail: float = 0.005
    trim_pre_london: bool = True
    ecm_gate: float = 0.10
    ecm_gate_mode: str = "warn"
    lp_horizon: int = 28
    lp_lag_growth: bool = True
    regime_min_rows: int = 60
    cf_percentile: float = 10.0
    cf_grid_percentiles: tuple = (5.0, 25.0)
    cf_price: str = "mean"
    cf_include_tip: bool = False
    placebo_reps: int = 200
    seed: int = 20240313

    synth_T: int = 1245
    synth_beta: float = -1.19
    synth_psi: float = -1.38
    synth_phi: float = -0.061
    synth_sigma: float = 0.15

    source: Path | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "source":
                continue
            v = getattr(self, f.name)
            if isinstance(v, Path):
                v = str(v)
            elif isinstance(v, dt.date):
                v = v.isoformat()
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def hash(self) -> str:
        """Short digest of the analysis settings; the output directory is excluded."""
        settings = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        blob = json.dumps(settings, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **kw) -> "RunConfig":
        return _validate(dataclasses.replace(self, **kw))


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "source"}


def _coerce(key, value, base: Path):
    default = _FIELDS[key].default
    if value is None:
        return None if key in PATH_KEYS else default
    try:
        if key in PATH_KEYS:
            p = Path(str(value)).expanduser()
            return p if p.is_absolute() else (base / p)
        if key in DATE_KEYS:
            if isinstance(value, dt.datetime):
                return value.date()
            if isinstance(value, dt.date):
                return value
            return dt.date.fromisoformat(str(value))
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError("expected true/false")
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or int(value) != value:
                raise TypeError("expected an integer")
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            if isinstance(value, (str, bytes)) or not hasattr(value, "__iter__"):
                raise TypeError("expected a list")
            items = tuple(value)
            return tuple(float(v) for v in items) if key == "cf_grid_percentiles" else tuple(map(str, items))
        if isinstance(default, str):
            return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r}: invalid value {value!r} ({exc})") from exc
    return value


def _validate(cfg: RunConfig) -> RunConfig:
    if not cfg.london < cfg.merge < cfg.dencun:
        raise ConfigError("upgrade dates must satisfy london < merge < dencun")
    for a, b in (("confirmatory_start", "confirmatory_end"), ("cf_start", "cf_end")):
        if getattr(cfg, b) < getattr(cfg, a):
            raise ConfigError(f"window end {b}={getattr(cfg, b)} precedes {a}={getattr(cfg, a)}")
    if cfg.confirmatory_end >= cfg.dencun:
        raise ConfigError("confirmatory window must end before Dencun")
    if cfg.hac_lag_levels < 0 or cfg.hac_lag_diff < 0:
        raise ConfigError("HAC lags must be non-negative")
    if not 0 < cfg.knot < 1:
        raise ConfigError(f"knot must lie in (0, 1), got {cfg.knot}")
    if cfg.demand_variant not in ("full", "lite"):
        raise ConfigError(f"demand_variant must be full or lite, got {cfg.demand_variant!r}")
    if not 0 <= cfg.winsor_tail < 0.5:
        raise ConfigError(f"winsor_tail must lie in [0, 0.5), got {cfg.winsor_tail}")
    if cfg.ecm_gate_mode not in ("warn", "raise", "off"):
        raise ConfigError(f"ecm_gate_mode must be warn, raise or off, got {cfg.ecm_gate_mode!r}")
    if not 0 < cfg.ecm_gate < 1:
        raise ConfigError("ecm_gate must lie in (0, 1)")
    if cfg.lp_horizon < 0:
        raise ConfigError("lp_horizon must be non-negative")
    if cfg.cf_price not in ("mean", "close"):
        raise ConfigError(f"cf_price must be mean or close, got {cfg.cf_price!r}")
    for p in (cfg.cf_percentile, *cfg.cf_grid_percentiles):
        if not 0 <= p <= 100:
            raise ConfigError(f"percentile {p} outside [0, 100]")
    if cfg.placebo_reps < 1:
        raise ConfigError("placebo_reps must be positive")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if not cfg.fdr_family:
        raise ConfigError("fdr_family must name at least one outcome")
    for key in ("panel", "shocks", "weights", "chain_shocks"):
        p = getattr(cfg, key)
        if p is not None and not Path(p).exists():
            raise ConfigError(f"config key {key!r}: file {p} does not exist")
    return cfg


def parse_config(path=None, **overrides) -> RunConfig:
    """Read and validate a flat YAML config; relative paths resolve against its folder.

    Unknown keys are rejected by name.  ``overrides`` (already typed) win over
    the file.
    """
    raw = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a key-value mapping")
        base = path.resolve().parent
    unknown = sorted(set(raw) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(map(str, unknown))}")
    values = {k: _coerce(k, v, base) for k, v in raw.items()}
    if "out_dir" in values and values["out_dir"] is None:
        values.pop("out_dir")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return _validate(RunConfig(**values, source=path))
