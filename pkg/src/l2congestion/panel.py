"""Daily UTC panel: loading, validation, winsorization and support summaries."""

from __future__ import annotations

import csv
import datetime as dt
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .errors import ColumnTypeError, DomainError, IntegrityError, ParseError, SchemaError

REQUIRED_COLUMNS = (
    "date",
    "l2_user_tx",
    "l1_tx_raw",
    "posting_tx",
    "basefee_median_gwei",
    "tip_median_gwei",
    "blob_fee_gwei",
    "gas_used_total",
    "utilization",
    "eth_logret",
    "cex_logvol",
    "rvol",
    "trends",
    "stable_issuance",
    "eth_price_mean",
    "eth_price_close",
)

# rows missing any of these cannot produce a treatment or primary outcome
LISTWISE_COLUMNS = ("l2_user_tx", "l1_tx_raw", "posting_tx", "basefee_median_gwei")

FLAG_PREFIXES = ("regime_", "cal_", "shock_", "flag_")


@dataclass(frozen=True)
class UpgradeCalendar:
    london: dt.date = dt.date(2021, 8, 5)
    merge: dt.date = dt.date(2022, 9, 15)
    dencun: dt.date = dt.date(2024, 3, 13)

    def __post_init__(self):
        for name in ("london", "merge", "dencun"):
            value = getattr(self, name)
            if not isinstance(value, dt.date):
                object.__setattr__(self, name, pd.Timestamp(value).date())
        if not (self.london < self.merge < self.dencun):
            raise IntegrityError(
                f"upgrade dates must satisfy london < merge < dencun, got "
                f"{self.london}, {self.merge}, {self.dencun}"
            )

    @property
    def pre_dencun_end(self) -> dt.date:
        return self.dencun - dt.timedelta(days=1)


@dataclass(frozen=True)
class ShockEvent:
    category: str
    name: str
    date: dt.date
    used_in_confirmatory: bool = True
    duration_days: int = 1


@dataclass(frozen=True)
class ShockCatalog:
    entries: tuple[ShockEvent, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for ev in self.entries:
            key = (ev.name, ev.date)
            if key in seen:
                raise IntegrityError(f"duplicate shock entry {ev.name!r} on {ev.date}")
            seen.add(key)
            if int(ev.duration_days) < 1:
                raise IntegrityError(
                    f"shock {ev.name!r} has duration_days={ev.duration_days}; must be >= 1"
                )

    def check(self, calendar: UpgradeCalendar) -> None:
        """Confirmatory events must precede the blob era."""
        for ev in self.entries:
            if ev.used_in_confirmatory and ev.date >= calendar.dencun:
                raise IntegrityError(
                    f"shock {ev.name!r} ({ev.date}) is flagged confirmatory but falls "
                    f"on or after Dencun ({calendar.dencun})"
                )

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


_CATALOG_ROWS = [
    ("Protocol", "London EIP-1559", "2021-08-05", True),
    ("Launch", "Arbitrum One mainnet", "2021-09-01", True),
    ("Airdrop", "dYdX airdrop", "2021-09-08", True),
    ("Launch", "Polygon Hermez v1", "2021-03-01", False),
    ("Airdrop", "Immutable X airdrop", "2021-11-05", True),
    ("Launch", "Starknet Alpha mainnet", "2021-11-16", True),
    ("Launch", "Optimism public mainnet", "2021-12-16", True),
    ("Airdrop", "Optimism airdrop 1", "2022-05-31", True),
    ("Upgrade", "Arbitrum Nitro upgrade", "2022-08-31", True),
    ("Protocol", "Ethereum Merge", "2022-09-15", True),
    ("Airdrop", "Optimism airdrop 2", "2023-02-09", True),
    ("Airdrop", "Arbitrum airdrop", "2023-03-23", True),
    ("Launch", "zkSync Era mainnet", "2023-03-24", True),
    ("Launch", "Polygon zkEVM mainnet", "2023-03-27", True),
    ("Upgrade", "Optimism Bedrock upgrade", "2023-06-06", True),
    ("Launch", "Linea mainnet", "2023-07-11", True),
    ("Launch", "Mantle mainnet", "2023-07-17", True),
    ("Campaign", "Base Onchain Summer", "2023-08-09", True, 7),
    ("Launch", "Base mainnet", "2023-08-09", True),
    ("Airdrop", "Optimism airdrop 3", "2023-09-18", True),
    ("Launch", "Scroll mainnet", "2023-10-17", True),
    ("Campaign", "Starknet STRK token launch", "2024-02-14", True),
    ("Airdrop", "Optimism airdrop 4", "2024-02-15", True),
    ("Protocol", "Dencun EIP-4844", "2024-03-13", False),
    ("Airdrop", "zkSync airdrop", "2024-06-17", False),
    ("Upgrade", "Polygon MATIC-to-POL transition", "2024-09-04", False),
    ("Campaign", "Starknet staking launch", "2024-11-26", False),
]


def default_shock_catalog() -> ShockCatalog:
    """The curated event catalog covering London through end-2024."""
    entries = []
    for row in _CATALOG_ROWS:
        cat, name, date, used = row[:4]
        duration = row[4] if len(row) > 4 else 1
        entries.append(ShockEvent(cat, name, dt.date.fromisoformat(date), used, duration))
    return ShockCatalog(tuple(entries))


def _parse_flag(value: str, where: str) -> bool:
    v = str(value).strip().lower()
    if v in ("y", "yes", "1", "true", "t"):
        return True
    if v in ("n", "no", "0", "false", "f"):
        return False
    raise ParseError(f"cannot parse flag {value!r} at {where}")


def load_shock_catalog(path) -> ShockCatalog:
    """Read a catalog CSV with columns category,name,date,used_confirmatory,duration_days."""
    path = Path(path)
    entries = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"category", "name", "date", "used_confirmatory", "duration_days"} - set(
            reader.fieldnames or ()
        )
        if missing:
            raise SchemaError(f"shock catalog {path} missing columns: {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                date = dt.date.fromisoformat(row["date"].strip())
            except ValueError as exc:
                raise ParseError(f"malformed date {row['date']!r} on line {lineno} of {path}") from exc
            try:
                duration = int(row["duration_days"])
            except ValueError as exc:
                raise ParseError(f"bad duration_days on line {lineno} of {path}") from exc
            entries.append(
                ShockEvent(
                    row["category"].strip(),
                    row["name"].strip(),
                    date,
                    _parse_flag(row["used_confirmatory"], f"line {lineno} of {path}"),
                    duration,
                )
            )
    return ShockCatalog(tuple(entries))


def write_shock_catalog(catalog: ShockCatalog, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["category", "name", "date", "used_confirmatory", "duration_days"])
        for ev in catalog:
            w.writerow([ev.category, ev.name, ev.date.isoformat(), "Y" if ev.used_in_confirmatory else "N",
                        ev.duration_days])


@dataclass(frozen=True)
class DailyPanel:
    """Immutable daily table indexed by UTC calendar date.

    ``data`` is indexed by a ``DatetimeIndex`` named ``date``; ``provenance`` maps
    each column to the identifier of the file it came from and ``meta`` holds
    bookkeeping such as dropped-row counts, calendar gaps and winsor bounds.
    """

    data: pd.DataFrame
    provenance: Mapping[str, str] = field(default_factory=dict)
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        idx = self.data.index
        if not isinstance(idx, pd.DatetimeIndex):
            raise IntegrityError("panel index must be a DatetimeIndex of UTC days")
        if idx.has_duplicates:
            dup = idx[idx.duplicated()][0]
            raise IntegrityError(f"duplicate date {dup.date()}")
        if not idx.is_monotonic_increasing:
            raise IntegrityError("panel dates must be strictly increasing")
        for col in self.data.columns:
            if str(col).startswith(FLAG_PREFIXES):
                vals = self.data[col].dropna().to_numpy()
                if not np.isin(vals, (0, 1)).all():
                    raise IntegrityError(f"flag column {col!r} contains values outside {{0,1}}")
        meta = dict(self.meta)
        meta["gaps"] = [d.date().isoformat() for d in _missing_days(idx)]
        object.__setattr__(self, "meta", meta)
        object.__setattr__(self, "provenance", dict(self.provenance))

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.data.index

    @property
    def gaps(self) -> list[str]:
        return list(self.meta["gaps"])

    def __len__(self):
        return len(self.data)

    def __getitem__(self, col):
        return self.data[col]

    @property
    def columns(self):
        return list(self.data.columns)

    def window(self, start=None, end=None) -> "DailyPanel":
        """Rows with ``start <= date <= end`` (either bound may be None)."""
        sub = self.data.loc[_as_ts(start):_as_ts(end)] if (start or end) else self.data
        return self.replace(data=sub.copy())

    def replace(self, data=None, provenance=None, **meta_updates) -> "DailyPanel":
        meta = {k: v for k, v in self.meta.items() if k != "gaps"}
        meta.update(meta_updates)
        return DailyPanel(
            data=self.data.copy() if data is None else data,
            provenance=self.provenance if provenance is None else provenance,
            meta=meta,
        )

    def with_columns(self, source: str = "derived", **columns) -> "DailyPanel":
        data = self.data.copy()
        prov = dict(self.provenance)
        for name, values in columns.items():
            data[name] = values
            prov[name] = source
        return self.replace(data=data, provenance=prov)

    def to_csv(self, path, float_format="%.12g") -> None:
        out = self.data.copy()
        out.index = out.index.strftime("%Y-%m-%d")
        out.index.name = "date"
        out.to_csv(path, float_format=float_format, lineterminator="\n")


def _as_ts(value):
    return None if value is None else pd.Timestamp(value)


def _missing_days(idx: pd.DatetimeIndex) -> pd.DatetimeIndex:
    if len(idx) < 2:
        return pd.DatetimeIndex([])
    full = pd.date_range(idx[0], idx[-1], freq="D")
    return full.difference(idx)


def load_panel(path, schema: Mapping[str, str] | None = None,
               required: Iterable[str] = REQUIRED_COLUMNS) -> DailyPanel:
    """Load a daily CSV into a :class:`DailyPanel`.

    ``schema`` maps canonical column names to the header names used in the file;
    unmapped canonical names are looked up verbatim.  Rows missing the treatment
    counts or the base fee are dropped listwise and counted in
    ``meta["dropped_count"]``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    schema = dict(schema or {})
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", comment="#")
    rename = {}
    missing = []
    for canon in required:
        src = schema.get(canon, canon)
        if src not in raw.columns:
            missing.append(canon if src == canon else f"{canon} (as {src!r})")
        else:
            rename[src] = canon
    if missing:
        raise SchemaError(f"{path.name}: missing required column(s): {', '.join(missing)}")
    raw = raw.rename(columns=rename)

    dates = []
    for i, text in enumerate(raw["date"]):
        try:
            dates.append(pd.Timestamp(dt.date.fromisoformat(text.strip())))
        except ValueError as exc:
            # header is line 1
            raise ParseError(f"{path.name}: malformed date {text!r} on line {i + 2}") from exc
    index = pd.DatetimeIndex(dates, name="date")
    if index.has_duplicates:
        dup = index[index.duplicated()][0]
        raise IntegrityError(f"{path.name}: duplicate date {dup.date()}")

    data = {}
    for col in raw.columns:
        if col == "date":
            continue
        text = raw[col].str.strip().replace({"": None, "NA": None, "NaN": None, "nan": None})
        try:
            data[col] = pd.to_numeric(text, errors="raise").astype(float).to_numpy()
        except (ValueError, TypeError) as exc:
            if col in required:
                raise ColumnTypeError(f"{path.name}: column {col!r} is not numeric") from exc
            continue
    frame = pd.DataFrame(data, index=index).sort_index()

    listwise = [c for c in LISTWISE_COLUMNS if c in frame.columns]
    keep = frame[listwise].notna().all(axis=1)
    dropped = frame.index[~keep]
    frame = frame.loc[keep]
    provenance = {c: path.name for c in frame.columns}
    return DailyPanel(
        frame,
        provenance,
        {
            "source": path.name,
            "dropped_count": int(len(dropped)),
            "dropped_dates": [d.date().isoformat() for d in dropped],
            "winsor": {},
        },
    )


def winsorize(panel: DailyPanel, columns: Iterable[str], tail: float) -> DailyPanel:
    """Clip each column at its ``tail`` and ``1 - tail`` quantiles.

    Quantiles use linear interpolation between order statistics.  Bounds are
    stored in ``meta["winsor"]``; a column already winsorized at the same tail
    is clipped to its recorded bounds again, which makes the operation
    idempotent.
    """
    if not 0 <= tail < 0.5:
        raise DomainError(f"winsor tail must satisfy 0 <= tail < 0.5, got {tail}")
    data = panel.data.copy()
    bounds = {k: dict(v) for k, v in panel.meta.get("winsor", {}).items()}
    for col in columns:
        if col not in data.columns:
            raise SchemaError(f"winsorize: unknown column {col!r}")
        if not pd.api.types.is_numeric_dtype(data[col]):
            raise ColumnTypeError(f"winsorize: column {col!r} is not numeric")
        if tail == 0:
            continue
        values = data[col].to_numpy(dtype=float)
        prior = bounds.get(col)
        if prior is not None and prior["tail"] == tail:
            lo, hi = prior["lower"], prior["upper"]
        else:
            lo, hi = np.nanquantile(values, [tail, 1 - tail], method="linear")
        data[col] = np.clip(values, lo, hi)
        bounds[col] = {"tail": tail, "lower": float(lo), "upper": float(hi),
                       "n_clipped": int(np.sum((values < lo) | (values > hi)))}
    return panel.replace(data=data, winsor=bounds)


@dataclass(frozen=True)
class SupportSummary:
    n: int
    min: float
    max: float
    sd: float
    narrow: bool
    threshold: float

    def as_dict(self):
        return {"n": self.n, "min": self.min, "max": self.max, "sd": self.sd,
                "narrow_support": self.narrow, "sd_threshold": self.threshold}


def validate_support(panel: DailyPanel, treatment: str = "a_clean", window=(None, None),
                     sd_threshold: float = 0.05) -> SupportSummary:
    """Min, max and standard deviation of the treatment over a date window.

    ``narrow`` is set when the standard deviation falls below ``sd_threshold``.
    """
    start, end = window if window is not None else (None, None)
    values = panel.window(start, end).data[treatment].dropna().to_numpy(dtype=float)
    if values.size == 0:
        raise DomainError(f"no {treatment} observations in window {start}..{end}")
    if np.any((values < 0) | (values > 1)):
        raise DomainError(f"{treatment} must lie in [0, 1]")
    # exact zero for constant input rather than rounding noise
    sd = float(np.std(values, ddof=1)) if values.size > 1 and np.ptp(values) > 0 else 0.0
    return SupportSummary(int(values.size), float(values.min()), float(values.max()), sd,
                          bool(sd < sd_threshold), sd_threshold)


def warn_out_of_range(name: str, date: dt.date, panel_start, panel_end) -> None:
    warnings.warn(f"shock {name!r} on {date} lies outside the panel range "
                  f"{panel_start}..{panel_end}; ignored", stacklevel=3)
