"""Market event types, the trading calendar / interval grid, and CSV ingestion.

Timestamps throughout are integer epoch milliseconds on the exchange-local
clock (no timezone conversion happens inside the engine): a tick stamped
2001-01-02 09:30:00.000 carries ``date_epoch_ms("2001-01-02") + OPEN_MS``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

MS_PER_DAY = 86_400_000
OPEN_MS = 34_200_000   # 09:30:00.000
CLOSE_MS = 57_600_000  # 16:00:00.000
SESSION_MS = CLOSE_MS - OPEN_MS  # 6.5 hours

#: interval width (ms) -> intervals per day
INTERVAL_WIDTHS = {1_800_000: 13, 390_000: 78}

TRADE_COLUMNS = ("symbol", "ts_ms", "price", "size")
QUOTE_COLUMNS = ("symbol", "ts_ms", "bid", "ask")
META_COLUMNS = ("symbol", "year", "market_cap", "sp500_flag")


def date_epoch_ms(d: date) -> int:
    return (d - date(1970, 1, 1)).days * MS_PER_DAY


@dataclass(frozen=True)
class TradeTick:
    symbol: str
    ts: int
    price: float
    size: int


@dataclass(frozen=True)
class QuoteTick:
    symbol: str
    ts: int
    bid: float
    ask: float


class TradingCalendar:
    """Ordered trading dates plus the intraday interval grid.

    Sessions run 09:30-16:00; ``interval_ms`` must divide the session evenly
    (30-minute width gives 13 slots per day, 5-minute width gives 78).
    """

    def __init__(self, dates: list[date], interval_ms: int = 1_800_000):
        if interval_ms not in INTERVAL_WIDTHS:
            raise ValueError(f"unsupported interval width {interval_ms} ms")
        if not dates:
            raise ValueError("calendar needs at least one trading date")
        if sorted(dates) != list(dates) or len(set(dates)) != len(dates):
            raise ValueError("calendar dates must be strictly increasing")
        self.dates = list(dates)
        self.interval_ms = interval_ms
        self.intervals_per_day = INTERVAL_WIDTHS[interval_ms]
        self._day_keys = np.array([date_epoch_ms(d) // MS_PER_DAY for d in dates], dtype=np.int64)

    # -- basic geometry ------------------------------------------------

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_intervals(self) -> int:
        return self.n_days * self.intervals_per_day

    def day_open_ms(self, day: int) -> int:
        return int(self._day_keys[day]) * MS_PER_DAY + OPEN_MS

    def global_index(self, day: int, slot: int) -> int:
        return day * self.intervals_per_day + slot

    def day_of(self, t: np.ndarray | int):
        return np.asarray(t) // self.intervals_per_day

    def slot_of(self, t: np.ndarray | int):
        return np.asarray(t) % self.intervals_per_day

    def interval_start_ms(self, day: int, slot: int) -> int:
        return self.day_open_ms(day) + slot * self.interval_ms

    # -- tick mapping ----------------------------------------------------

    def interval_of(self, ts: int) -> tuple[int, int] | None:
        """Map one timestamp to (day index, slot index); None if out of session.

        The 16:00:00.000 close maps to the last slot so closing prints are kept;
        anything later is after-hours.
        """
        day, slot = self.map_timestamps(np.array([ts], dtype=np.int64))
        if day[0] < 0:
            return None
        return int(day[0]), int(slot[0])

    def map_timestamps(self, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized interval_of. Returns (day, slot) arrays with -1 for out-of-session."""
        ts = np.asarray(ts, dtype=np.int64)
        day_key = ts // MS_PER_DAY
        pos = np.searchsorted(self._day_keys, day_key)
        in_cal = (pos < len(self._day_keys)) & (self._day_keys[np.minimum(pos, len(self._day_keys) - 1)] == day_key)
        offset = ts - day_key * MS_PER_DAY
        in_session = (offset >= OPEN_MS) & (offset <= CLOSE_MS)
        slot = (offset - OPEN_MS) // self.interval_ms
        # the close stamp belongs to the final interval, not a phantom next one
        slot = np.minimum(slot, self.intervals_per_day - 1)
        ok = in_cal & in_session
        day = np.where(ok, pos, -1).astype(np.int64)
        slot = np.where(ok, slot, -1).astype(np.int64)
        return day, slot

    # -- calendar-derived labels ----------------------------------------

    def month_of_day(self) -> np.ndarray:
        """Per trading day: calendar month key YYYYMM."""
        return np.array([d.year * 100 + d.month for d in self.dates], dtype=np.int64)

    def weekday_of_day(self) -> np.ndarray:
        """Per trading day: 1=Monday .. 5=Friday."""
        return np.array([d.weekday() + 1 for d in self.dates], dtype=np.int64)

    def turn_of_month_days(self) -> np.ndarray:
        """Boolean per trading day: first or last trading day of its calendar month."""
        months = self.month_of_day()
        first = np.r_[True, months[1:] != months[:-1]]
        last = np.r_[months[1:] != months[:-1], True]
        return first | last

    def year_of_day(self) -> np.ndarray:
        return np.array([d.year for d in self.dates], dtype=np.int64)

    # -- construction ----------------------------------------------------

    @classmethod
    def from_file(cls, path: str | Path, interval_ms: int = 1_800_000) -> "TradingCalendar":
        """One ISO date per line, blank lines ignored."""
        dates = []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if line:
                dates.append(date.fromisoformat(line))
        return cls(dates, interval_ms)

    @classmethod
    def generate(cls, start: date, n_days: int, interval_ms: int = 1_800_000) -> "TradingCalendar":
        """Consecutive weekdays starting at (or after) ``start``."""
        dates = []
        d = start
        while len(dates) < n_days:
            if d.weekday() < 5:
                dates.append(d)
            d += timedelta(days=1)
        return cls(dates, interval_ms)

    def write(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{d.isoformat()}\n" for d in self.dates))


@dataclass
class IngestStats:
    """Row accounting for one file load: total = emitted + rejected + out_of_session."""

    total_rows: int = 0
    emitted: int = 0
    rejected: int = 0
    out_of_session: int = 0

    def check(self) -> None:
        assert self.total_rows == self.emitted + self.rejected + self.out_of_session


def _read_numeric(path: str | Path, columns: tuple[str, ...]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    df = pd.read_csv(path, dtype={"symbol": str})
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    for c in columns[1:]:
        df[c] = pd.to_numeric(df[c], errors="coerce")
    return df


def _finalize(df: pd.DataFrame, good: np.ndarray, calendar: TradingCalendar | None,
              stats: IngestStats, int_cols: tuple[str, ...]) -> pd.DataFrame:
    stats.rejected = int((~good).sum())
    df = df.loc[good]
    if calendar is not None:
        day, slot = calendar.map_timestamps(df["ts_ms"].to_numpy(np.int64))
        in_session = day >= 0
        stats.out_of_session = int((~in_session).sum())
        df = df.loc[in_session]
    stats.emitted = len(df)
    stats.check()
    # nondecreasing ts per symbol; equal timestamps keep file order
    df = df.sort_values(["symbol", "ts_ms"], kind="stable").reset_index(drop=True)
    for c in int_cols:
        df[c] = df[c].astype(np.int64)
    return df


def load_trades(path: str | Path, calendar: TradingCalendar | None = None
                ) -> tuple[pd.DataFrame, IngestStats]:
    """Load a trade CSV (`symbol,ts_ms,price,size`).

    Malformed rows (non-numeric fields, price <= 0, size < 1) are rejected and
    counted, not fatal; out-of-session timestamps are dropped when a calendar
    is supplied.
    """
    df = _read_numeric(path, TRADE_COLUMNS)
    stats = IngestStats(total_rows=len(df))
    good = (
        df["ts_ms"].notna() & df["price"].notna() & df["size"].notna()
        & (df["price"] > 0) & (df["size"] >= 1) & df["symbol"].notna()
    ).to_numpy()
    if (~good).any():
        logger.warning("%s: rejected %d malformed trade rows", path, int((~good).sum()))
    out = _finalize(df, good, calendar, stats, ("ts_ms", "size"))
    return out[list(TRADE_COLUMNS)], stats


def load_quotes(path: str | Path, calendar: TradingCalendar | None = None
                ) -> tuple[pd.DataFrame, IngestStats]:
    """Load a quote CSV (`symbol,ts_ms,bid,ask`); crossed quotes (bid > ask) are rejected."""
    df = _read_numeric(path, QUOTE_COLUMNS)
    stats = IngestStats(total_rows=len(df))
    good = (
        df["ts_ms"].notna() & df["bid"].notna() & df["ask"].notna()
        & (df["bid"] > 0) & (df["bid"] <= df["ask"]) & df["symbol"].notna()
    ).to_numpy()
    if (~good).any():
        logger.warning("%s: rejected %d malformed quote rows", path, int((~good).sum()))
    out = _finalize(df, good, calendar, stats, ("ts_ms",))
    return out[list(QUOTE_COLUMNS)], stats


class SecurityMeta:
    """Per-symbol year-end market caps and index-membership flags."""

    def __init__(self, table: pd.DataFrame):
        missing = [c for c in META_COLUMNS if c not in table.columns]
        if missing:
            raise ValueError(f"meta table missing columns {missing}")
        if (table["market_cap"].dropna() <= 0).any():
            raise ValueError("market_cap must be positive where present")
        self.table = table
        self._caps = table.set_index(["symbol", "year"])["market_cap"].to_dict()
        self._sp = table.set_index(["symbol", "year"])["sp500_flag"].astype(bool).to_dict()

    @classmethod
    def from_file(cls, path: str | Path) -> "SecurityMeta":
        df = _read_numeric(path, META_COLUMNS)
        good = df["year"].notna() & df["market_cap"].notna() & df["sp500_flag"].notna()
        if (~good).any():
            logger.warning("%s: dropped %d malformed meta rows", path, int((~good).sum()))
            df = df.loc[good]
        df = df.copy()
        df["year"] = df["year"].astype(np.int64)
        df["sp500_flag"] = df["sp500_flag"].astype(np.int64)
        return cls(df)

    def year_end_cap(self, symbol: str, year: int) -> float | None:
        return self._caps.get((symbol, year))

    def sp_member(self, symbol: str, year: int) -> bool | None:
        return self._sp.get((symbol, year))

    def cap_vector(self, symbols: np.ndarray, year: int) -> np.ndarray:
        """Year-end caps for ``year`` aligned to ``symbols``; NaN where unknown."""
        return np.array([self._caps.get((s, year), np.nan) for s in symbols], dtype=np.float64)

    def sp_vector(self, symbols: np.ndarray, year: int) -> np.ndarray:
        return np.array([bool(self._sp.get((s, year), False)) for s in symbols])
