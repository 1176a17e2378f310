"""Buyer/seller trade classification and order imbalance.

Each trade is compared to the midpoint of the prevailing quote (the latest
same-day quote stamped at or before the trade; no quote-lag delay). Prints
above the mid are buys, below are sells, and at-mid prints fall back to a
tick test against the last *distinct* transaction price. Unresolvable cases
stay unclassified and are excluded from signed volume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .marketdata import MS_PER_DAY, TradingCalendar

BUY, SELL, UNCLASSIFIED = 1, -1, 0


def classify_trade(price: float, bid: float | None, ask: float | None,
                   last_distinct_price: float | None) -> int:
    """Classify a single trade; returns BUY (+1), SELL (-1) or UNCLASSIFIED (0)."""
    if bid is None or ask is None:
        return UNCLASSIFIED
    mid = (bid + ask) / 2.0
    if price > mid:
        return BUY
    if price < mid:
        return SELL
    if last_distinct_price is None:
        return UNCLASSIFIED
    if price > last_distinct_price:
        return BUY
    if price < last_distinct_price:
        return SELL
    return UNCLASSIFIED


def last_distinct_prices(prices: np.ndarray) -> np.ndarray:
    """For each trade, the most recent earlier price different from its own.

    NaN where no prior distinct price exists. Input must be one symbol's
    prices in time order.
    """
    n = len(prices)
    out = np.full(n, np.nan)
    if n == 0:
        return out
    idx = np.arange(n)
    change = np.r_[True, prices[1:] != prices[:-1]]
    run_start = np.maximum.accumulate(np.where(change, idx, 0))
    prev = run_start - 1
    has_prev = prev >= 0
    out[has_prev] = prices[prev[has_prev]]
    return out


@dataclass
class SignedTrades:
    """Trades plus classification side and the prevailing quote at each print."""

    frame: pd.DataFrame  # symbol, ts_ms, price, size, side, bid, ask, mid

    @property
    def sides(self) -> np.ndarray:
        return self.frame["side"].to_numpy()

    def unclassified_share(self) -> float:
        return float((self.frame["side"] == UNCLASSIFIED).mean()) if len(self.frame) else 0.0

    def to_csv(self, path) -> None:
        self.frame[["symbol", "ts_ms", "price", "size", "side"]].to_csv(path, index=False)


def _sign_one_symbol(prices: np.ndarray, trade_ts: np.ndarray,
                     quote_ts: np.ndarray, bids: np.ndarray, asks: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized classification for one symbol's time-ordered trades/quotes.

    Prevailing-quote lookup is restricted to the same day (overnight quotes
    are stale). Returns (side, bid, ask) aligned to trades; bid/ask NaN where
    no prevailing quote.
    """
    n = len(prices)
    bid = np.full(n, np.nan)
    ask = np.full(n, np.nan)
    if len(quote_ts):
        qi = np.searchsorted(quote_ts, trade_ts, side="right") - 1
        ok = qi >= 0
        # same trading day only
        ok &= quote_ts[np.maximum(qi, 0)] // MS_PER_DAY == trade_ts // MS_PER_DAY
        bid[ok] = bids[qi[ok]]
        ask[ok] = asks[qi[ok]]
    mid = (bid + ask) / 2.0

    side = np.zeros(n, dtype=np.int8)
    have_quote = ~np.isnan(mid)
    side[have_quote & (prices > mid)] = BUY
    side[have_quote & (prices < mid)] = SELL

    at_mid = have_quote & (prices == mid)
    if at_mid.any():
        ref = last_distinct_prices(prices)
        up = at_mid & ~np.isnan(ref) & (prices > ref)
        dn = at_mid & ~np.isnan(ref) & (prices < ref)
        side[up] = BUY
        side[dn] = SELL
    return side, bid, ask


def sign_trades(trades: pd.DataFrame, quotes: pd.DataFrame,
                calendar: TradingCalendar | None = None) -> SignedTrades:
    """Classify every trade; inputs must be time-sorted per symbol.

    Symbols are processed independently (state is per-symbol), so any
    per-symbol partitioning yields identical output.
    """
    del calendar  # day boundaries come straight off the timestamps
    n = len(trades)
    side = np.zeros(n, dtype=np.int8)
    bid = np.full(n, np.nan)
    ask = np.full(n, np.nan)

    t_sym = trades["symbol"].to_numpy()
    q_sym = quotes["symbol"].to_numpy()
    t_bounds = _group_bounds(t_sym)
    q_bounds = {s: (a, b) for s, a, b in iter_bounds(q_sym)}

    t_ts = trades["ts_ms"].to_numpy(np.int64)
    t_px = trades["price"].to_numpy(np.float64)
    q_ts = quotes["ts_ms"].to_numpy(np.int64)
    q_bid = quotes["bid"].to_numpy(np.float64)
    q_ask = quotes["ask"].to_numpy(np.float64)

    empty = np.empty(0)
    for sym, a, b in t_bounds:
        qa, qb = q_bounds.get(sym, (0, 0))
        s, bb, aa = _sign_one_symbol(
            t_px[a:b], t_ts[a:b],
            q_ts[qa:qb], q_bid[qa:qb] if qb > qa else empty,
            q_ask[qa:qb] if qb > qa else empty,
        )
        side[a:b] = s
        bid[a:b] = bb
        ask[a:b] = aa

    frame = trades.copy()
    frame["side"] = side
    frame["bid"] = bid
    frame["ask"] = ask
    frame["mid"] = (bid + ask) / 2.0
    return SignedTrades(frame)


def iter_bounds(keys: np.ndarray):
    """Yield (key, start, stop) for each run of equal keys in a sorted array."""
    if len(keys) == 0:
        return
    starts = np.r_[0, np.nonzero(keys[1:] != keys[:-1])[0] + 1]
    stops = np.r_[starts[1:], len(keys)]
    for st, sp in zip(starts, stops):
        yield keys[st], int(st), int(sp)


def _group_bounds(keys: np.ndarray) -> list[tuple]:
    return list(iter_bounds(keys))


def order_imbalance(sides: np.ndarray, sizes: np.ndarray) -> tuple[int, bool]:
    """Net signed volume for one interval: buy shares minus sell shares.

    Unclassified volume is excluded. Returns (oi, empty_flag); empty_flag is
    True when the interval held no trades at all.
    """
    if len(sides) == 0:
        return 0, True
    sides = np.asarray(sides)
    sizes = np.asarray(sizes)
    buys = int(sizes[sides == BUY].sum())
    sells = int(sizes[sides == SELL].sum())
    return buys - sells, False
