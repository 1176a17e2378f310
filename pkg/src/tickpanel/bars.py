"""Tick-to-bar aggregation and the derived per-interval panel variables.

A BarPanel is columnar: one row per symbol, one column per global interval
t = day * intervals_per_day + slot. Missing values are NaN (never silent
zeros); a bar is empty when its trade count is zero, in which case any
prevailing quotes are still retained.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .marketdata import MS_PER_DAY, TradingCalendar
from .signing import BUY, SELL, _sign_one_symbol, iter_bounds

LARGE_TRADE_SHARES = 1_000  # trades at or above this size count as large


@dataclass
class PanelMatrix:
    """One derived variable on the shared (symbol, global interval) grid."""

    tag: str
    symbols: np.ndarray
    values: np.ndarray  # (n_symbols, n_intervals) float64, NaN = missing
    calendar: TradingCalendar

    @property
    def n_intervals(self) -> int:
        return self.values.shape[1]

    def like(self, tag: str, values: np.ndarray) -> "PanelMatrix":
        return PanelMatrix(tag, self.symbols, values, self.calendar)


@dataclass
class BarPanel:
    symbols: np.ndarray
    calendar: TradingCalendar
    first: np.ndarray
    last: np.ndarray
    close_bid: np.ndarray
    close_ask: np.ndarray
    open_bid: np.ndarray
    open_ask: np.ndarray
    volume: np.ndarray
    small_volume: np.ndarray
    large_volume: np.ndarray
    buy_volume: np.ndarray
    sell_volume: np.ndarray
    oi: np.ndarray
    trades: np.ndarray

    @property
    def close_mid(self) -> np.ndarray:
        return (self.close_bid + self.close_ask) / 2.0

    @property
    def open_mid(self) -> np.ndarray:
        return (self.open_bid + self.open_ask) / 2.0

    @property
    def open_rel_spread(self) -> np.ndarray:
        mid = self.open_mid
        with np.errstate(invalid="ignore", divide="ignore"):
            return (self.open_ask - self.open_bid) / mid

    @property
    def empty(self) -> np.ndarray:
        return self.trades == 0

    def export_csv(self, path: str | Path) -> None:
        """Bar export: `symbol,date,slot,last,bid,ask,mid,rel_spread,volume,...`.

        Rows are emitted for cells holding a trade or a quote, in
        (symbol, date, slot) order.
        """
        P = self.calendar.intervals_per_day
        keep = (self.trades > 0) | ~np.isnan(self.close_bid)
        si, ti = np.nonzero(keep)
        dates = np.array([d.isoformat() for d in self.calendar.dates])
        df = pd.DataFrame({
            "symbol": self.symbols[si],
            "date": dates[ti // P],
            "slot": ti % P,
            "last": self.last[si, ti],
            "bid": self.close_bid[si, ti],
            "ask": self.close_ask[si, ti],
            "mid": self.close_mid[si, ti],
            "rel_spread": self.open_rel_spread[si, ti],
            "volume": self.volume[si, ti],
            "small_vol": self.small_volume[si, ti],
            "large_vol": self.large_volume[si, ti],
            "oi": self.oi[si, ti],
            "trades": self.trades[si, ti],
        })
        df.to_csv(path, index=False)


def _aggregate_symbol(out: BarPanel, row: int,
                      t_ts: np.ndarray, t_px: np.ndarray, t_sz: np.ndarray,
                      q_ts: np.ndarray, q_bid: np.ndarray, q_ask: np.ndarray,
                      calendar: TradingCalendar,
                      bar_start: np.ndarray, bar_end: np.ndarray) -> None:
    """Fill one symbol's row of every bar array. Inputs are time-sorted."""
    P = calendar.intervals_per_day

    day, slot = calendar.map_timestamps(t_ts)
    ok = day >= 0
    if not ok.all():
        t_ts, t_px, t_sz, day, slot = (a[ok] for a in (t_ts, t_px, t_sz, day, slot))

    if len(t_ts):
        side, _, _ = _sign_one_symbol(t_px, t_ts, q_ts, q_bid, q_ask)
        g = day * P + slot
        starts = np.r_[0, np.nonzero(np.diff(g))[0] + 1]
        cells = g[starts]
        stops = np.r_[starts[1:], len(g)]

        out.trades[row, cells] = stops - starts
        out.first[row, cells] = t_px[starts]
        out.last[row, cells] = t_px[stops - 1]
        out.volume[row, cells] = np.add.reduceat(t_sz, starts)
        small = np.where(t_sz < LARGE_TRADE_SHARES, t_sz, 0)
        out.small_volume[row, cells] = np.add.reduceat(small, starts)
        out.large_volume[row, cells] = out.volume[row, cells] - out.small_volume[row, cells]
        buys = np.where(side == BUY, t_sz, 0)
        sells = np.where(side == SELL, t_sz, 0)
        out.buy_volume[row, cells] = np.add.reduceat(buys, starts)
        out.sell_volume[row, cells] = np.add.reduceat(sells, starts)
        out.oi[row, cells] = out.buy_volume[row, cells] - out.sell_volume[row, cells]

    if len(q_ts):
        q_day = q_ts // MS_PER_DAY
        for boundary, bid_arr, ask_arr in (
            (bar_start, out.open_bid, out.open_ask),
            (bar_end, out.close_bid, out.close_ask),
        ):
            qi = np.searchsorted(q_ts, boundary, side="right") - 1
            valid = qi >= 0
            valid &= q_day[np.maximum(qi, 0)] == boundary // MS_PER_DAY
            bid_arr[row, valid] = q_bid[qi[valid]]
            ask_arr[row, valid] = q_ask[qi[valid]]


def build_bars(trades: pd.DataFrame, quotes: pd.DataFrame, calendar: TradingCalendar,
               threads: int = 1) -> BarPanel:
    """Aggregate tick events into interval bars.

    Symbols are processed independently; ``threads`` only partitions the
    symbol set, so output is identical for any worker count. The symbol
    universe is the union of trade and quote symbols, sorted.
    """
    t_sym = trades["symbol"].to_numpy()
    q_sym = quotes["symbol"].to_numpy()
    symbols = np.unique(np.concatenate([t_sym, q_sym])) if len(t_sym) or len(q_sym) \
        else np.empty(0, dtype=object)

    S, T = len(symbols), calendar.n_intervals
    nanf = lambda: np.full((S, T), np.nan)
    zi = lambda: np.zeros((S, T), dtype=np.int64)
    out = BarPanel(
        symbols=symbols, calendar=calendar,
        first=nanf(), last=nanf(),
        close_bid=nanf(), close_ask=nanf(), open_bid=nanf(), open_ask=nanf(),
        volume=zi(), small_volume=zi(), large_volume=zi(),
        buy_volume=zi(), sell_volume=zi(), oi=zi(), trades=zi(),
    )
    if S == 0:
        return out

    t_ts = trades["ts_ms"].to_numpy(np.int64)
    t_px = trades["price"].to_numpy(np.float64)
    t_sz = trades["size"].to_numpy(np.int64)
    q_ts = quotes["ts_ms"].to_numpy(np.int64)
    q_bid = quotes["bid"].to_numpy(np.float64)
    q_ask = quotes["ask"].to_numpy(np.float64)

    row_of = {s: i for i, s in enumerate(symbols)}
    t_bounds = {row_of[s]: (a, b) for s, a, b in iter_bounds(t_sym)}
    q_bounds = {row_of[s]: (a, b) for s, a, b in iter_bounds(q_sym)}
    empty_i = np.empty(0, dtype=np.int64)
    empty_f = np.empty(0)

    P = calendar.intervals_per_day
    t_idx = np.arange(T, dtype=np.int64)
    day_opens = np.array([calendar.day_open_ms(d) for d in range(calendar.n_days)],
                         dtype=np.int64)
    bar_start = day_opens[t_idx // P] + (t_idx % P) * calendar.interval_ms
    bar_end = bar_start + calendar.interval_ms

    def run_rows(rows) -> None:
        for row in rows:
            ta, tb = t_bounds.get(row, (0, 0))
            qa, qb = q_bounds.get(row, (0, 0))
            _aggregate_symbol(
                out, row,
                t_ts[ta:tb] if tb > ta else empty_i,
                t_px[ta:tb] if tb > ta else empty_f,
                t_sz[ta:tb] if tb > ta else empty_i,
                q_ts[qa:qb] if qb > qa else empty_i,
                q_bid[qa:qb] if qb > qa else empty_f,
                q_ask[qa:qb] if qb > qa else empty_f,
                calendar, bar_start, bar_end,
            )

    if threads <= 1:
        run_rows(range(S))
    else:
        chunks = np.array_split(np.arange(S), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_rows, chunks))
    return out


def _chained_ratio(series: np.ndarray, P: int, base: np.ndarray | None) -> np.ndarray:
    """series[t] / series[t-1] - 1 within each day; slot 0 uses ``base`` instead."""
    r = np.full_like(series, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        r[:, 1:] = series[:, 1:] / series[:, :-1] - 1.0
        if base is not None:
            r[:, 0::P] = series[:, 0::P] / base[:, 0::P] - 1.0
        else:
            r[:, 0::P] = np.nan
    return r


def txn_returns(bars: BarPanel) -> PanelMatrix:
    """Within-day transaction-price returns; never spans the overnight gap.

    Day-open slots re-base on the day's first in-session trade.
    """
    P = bars.calendar.intervals_per_day
    vals = _chained_ratio(bars.last, P, bars.first)
    return PanelMatrix("txn_return", bars.symbols, vals, bars.calendar)


def quote_returns(bars: BarPanel, leg: str) -> PanelMatrix:
    """Bid-to-bid, ask-to-ask, or mid-to-mid interval returns (within-day).

    Day-open slots re-base on the quote prevailing at the session open.
    """
    series = {"bid": bars.close_bid, "ask": bars.close_ask, "mid": bars.close_mid}[leg]
    base = {"bid": bars.open_bid, "ask": bars.open_ask, "mid": bars.open_mid}[leg]
    vals = _chained_ratio(series, bars.calendar.intervals_per_day, base)
    return PanelMatrix(f"{leg}_return", bars.symbols, vals, bars.calendar)


def _pct_change(x: np.ndarray) -> np.ndarray:
    out = np.full_like(x, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        prev = x[:, :-1]
        out[:, 1:] = np.where(prev != 0, x[:, 1:] / prev - 1.0, np.nan)
    return out


def derived_variables(bars: BarPanel, returns: PanelMatrix | None = None
                      ) -> dict[str, PanelMatrix]:
    """Lagged-difference panels used as Eq-style regressors and controls.

    Unlike returns, these chain across the overnight boundary (day-open slot
    differences against the prior day's close slot) so regressions have a
    value at every interval. Zero denominators and empty bars go missing.
    """
    if returns is None:
        returns = txn_returns(bars)
    empty = bars.empty

    def masked_log(vol: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(~empty & (vol > 0), np.log(vol.astype(np.float64)), np.nan)

    def dlog(vol: np.ndarray) -> np.ndarray:
        lv = masked_log(vol)
        out = np.full_like(lv, np.nan)
        out[:, 1:] = lv[:, 1:] - lv[:, :-1]
        return out

    oi = np.where(~empty, bars.oi.astype(np.float64), np.nan)
    d_oi = np.full_like(oi, np.nan)
    d_oi[:, 1:] = oi[:, 1:] - oi[:, :-1]

    panels = {
        "dlog_volume": dlog(bars.volume),
        "dlog_small_volume": dlog(bars.small_volume),
        "dlog_large_volume": dlog(bars.large_volume),
        "d_oi": d_oi,
        "pct_abs_return": _pct_change(np.abs(returns.values)),
        "pct_rel_spread": _pct_change(bars.open_rel_spread),
    }
    return {tag: PanelMatrix(tag, bars.symbols, vals, bars.calendar)
            for tag, vals in panels.items()}
