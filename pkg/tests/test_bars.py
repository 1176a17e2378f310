from collections import Counter
from datetime import date

import numpy as np
import pandas as pd
import pytest

from tickpanel.bars import build_bars, derived_variables, quote_returns, txn_returns
from tickpanel.marketdata import MS_PER_DAY, OPEN_MS, TradingCalendar, date_epoch_ms

from conftest import assert_panels_aligned

D0 = date(2001, 1, 2)


def ts(day_offset: int, minute: int, ms: int = 0) -> int:
    base = date_epoch_ms(D0) + day_offset * MS_PER_DAY
    return base + OPEN_MS + minute * 60_000 + ms


def frames(trades, quotes):
    tdf = pd.DataFrame(trades, columns=["symbol", "ts_ms", "price", "size"])
    qdf = pd.DataFrame(quotes, columns=["symbol", "ts_ms", "bid", "ask"])
    return tdf, qdf


@pytest.fixture(scope="module")
def cal2():
    return TradingCalendar.generate(D0, 2)


class TestBuildBars:
    def test_direct_aggregation(self, cal2):
        tdf, qdf = frames(
            [("A", ts(0, 1), 10.00, 100), ("A", ts(0, 2), 10.02, 300)],
            [("A", ts(0, 0), 9.99, 10.01)],
        )
        bars = build_bars(tdf, qdf, cal2)
        assert bars.volume[0, 0] == 400
        assert bars.last[0, 0] == 10.02
        assert bars.trades[0, 0] == 2

    def test_large_cutoff_inclusive(self, cal2):
        tdf, qdf = frames(
            [("A", ts(0, 1), 10.0, 900), ("A", ts(0, 2), 10.0, 1000)],
            [("A", ts(0, 0), 9.99, 10.01)],
        )
        bars = build_bars(tdf, qdf, cal2)
        assert bars.small_volume[0, 0] == 900
        assert bars.large_volume[0, 0] == 1000

    def test_small_plus_large_is_volume(self, small_bars):
        assert np.array_equal(small_bars.small_volume + small_bars.large_volume,
                              small_bars.volume)
        assert (small_bars.buy_volume + small_bars.sell_volume
                <= small_bars.volume).all()

    def test_bar_count_matches_independent_histogram(self, cal2):
        rng = np.random.default_rng(7)
        n = 5000
        syms = rng.choice(["A", "B", "C"], n)
        day = rng.integers(0, 2, n)
        offset = rng.integers(0, 23_400_000, n)
        t = date_epoch_ms(D0) + day * MS_PER_DAY + OPEN_MS + offset
        tdf = pd.DataFrame({"symbol": syms, "ts_ms": t,
                            "price": np.full(n, 10.0), "size": np.ones(n, dtype=int)})
        tdf = tdf.sort_values(["symbol", "ts_ms"], kind="stable").reset_index(drop=True)
        qdf = frames([], [])[1]
        bars = build_bars(tdf, qdf, cal2)
        # independent pass: histogram cells straight off the raw ticks
        cells = Counter(
            (s, int(d), min(int(o // 1_800_000), 12))
            for s, d, o in zip(syms, day, offset)
        )
        assert int((bars.trades > 0).sum()) == len(cells)
        for (s, d, slot), count in cells.items():
            row = list(bars.symbols).index(s)
            assert bars.trades[row, d * 13 + slot] == count

    def test_quotes_retained_on_empty_bar(self, cal2):
        tdf, qdf = frames(
            [("A", ts(0, 1), 10.0, 100)],
            [("A", ts(0, 0), 9.99, 10.01), ("A", ts(0, 31), 10.01, 10.03)],
        )
        bars = build_bars(tdf, qdf, cal2)
        assert bars.trades[0, 1] == 0
        assert np.isnan(bars.last[0, 1])
        assert bars.close_bid[0, 1] == 10.01

    def test_open_close_quotes(self, cal2):
        tdf, qdf = frames(
            [("A", ts(0, 1), 10.0, 100)],
            [("A", ts(0, 0), 9.99, 10.01), ("A", ts(0, 29), 10.05, 10.07)],
        )
        bars = build_bars(tdf, qdf, cal2)
        assert bars.open_bid[0, 0] == 9.99
        assert bars.close_bid[0, 0] == 10.05  # prevailing at the interval end
        assert bars.open_bid[0, 1] == 10.05   # carried into the next interval open

    def test_rel_spread_at_interval_start(self, cal2):
        tdf, qdf = frames(
            [("A", ts(0, 1), 10.0, 100)],
            [("A", ts(0, 0), 9.99, 10.01)],
        )
        bars = build_bars(tdf, qdf, cal2)
        assert bars.open_rel_spread[0, 0] == pytest.approx(0.02 / 10.0)

    def test_threads_bit_identical(self, small_sim):
        one = build_bars(small_sim.trades, small_sim.quotes, small_sim.calendar, threads=1)
        three = build_bars(small_sim.trades, small_sim.quotes, small_sim.calendar, threads=3)
        for name in ("first", "last", "close_bid", "close_ask", "open_bid", "open_ask"):
            assert np.array_equal(getattr(one, name), getattr(three, name), equal_nan=True)
        for name in ("volume", "small_volume", "large_volume", "buy_volume",
                     "sell_volume", "oi", "trades"):
            assert np.array_equal(getattr(one, name), getattr(three, name))

    def test_export_schema(self, small_bars, tmp_path):
        path = tmp_path / "bars.csv"
        small_bars.export_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == ("symbol,date,slot,last,bid,ask,mid,rel_spread,"
                          "volume,small_vol,large_vol,oi,trades")


class TestTxnReturns:
    def test_simple_return(self, cal2):
        tdf, qdf = frames(
            [("A", ts(0, 1), 10.00, 100), ("A", ts(0, 31), 10.05, 100)],
            [("A", ts(0, 0), 9.99, 10.01)],
        )
        ret = txn_returns(build_bars(tdf, qdf, cal2))
        assert ret.values[0, 1] == pytest.approx(0.005)

    def test_slot0_never_spans_overnight(self, cal2):
        tdf, qdf = frames(
            [("A", ts(0, 389), 10.00, 100),        # day 0, last slot
             ("A", ts(1, 1), 20.00, 100),          # day 1 slot 0, first
             ("A", ts(1, 20), 20.10, 100)],        # day 1 slot 0, last
            [("A", ts(0, 0), 9.99, 10.01)],
        )
        ret = txn_returns(build_bars(tdf, qdf, cal2))
        # slot-0 return re-bases on the day's first in-session trade
        assert ret.values[0, 13] == pytest.approx(20.10 / 20.00 - 1)

    def test_constant_price_all_zero(self, cal2):
        trades = [("A", ts(0, m), 15.0, 100) for m in range(0, 390, 10)]
        ret = txn_returns(build_bars(*frames(trades, [("A", ts(0, 0), 14.99, 15.01)]), cal2))
        vals = ret.values[0, :13]
        assert np.nanmax(np.abs(vals)) == 0.0

    def test_missing_propagates(self, cal2):
        tdf, qdf = frames([("A", ts(0, 61), 10.0, 100)],  # slot 2 only
                          [("A", ts(0, 0), 9.99, 10.01)])
        ret = txn_returns(build_bars(tdf, qdf, cal2))
        assert np.isnan(ret.values[0, 2])  # no base at slot 1
        assert np.isnan(ret.values[0, 0])

    def test_compounding_identity(self, small_bars, small_returns):
        # within-day compounding over slots 1..12 reproduces last(12)/last(0) - 1
        vals = small_returns.values
        last = small_bars.last
        P = small_bars.calendar.intervals_per_day
        for d in range(small_bars.calendar.n_days):
            cols = slice(d * P + 1, (d + 1) * P)
            gross = np.prod(1.0 + vals[:, cols], axis=1)
            target = last[:, (d + 1) * P - 1] / last[:, d * P]
            ok = np.isfinite(gross) & np.isfinite(target)
            assert np.allclose(gross[ok], target[ok], rtol=1e-12, atol=0)


class TestQuoteReturns:
    def test_bid_return(self, cal2):
        tdf, qdf = frames(
            [("A", ts(0, 1), 10.0, 100), ("A", ts(0, 31), 10.0, 100)],
            [("A", ts(0, 0), 9.98, 10.02), ("A", ts(0, 35), 10.00, 10.04)],
        )
        ret = quote_returns(build_bars(tdf, qdf, cal2), "bid")
        assert ret.values[0, 1] == pytest.approx(10.00 / 9.98 - 1)

    def test_degenerate_quote_makes_legs_identical(self, cal2):
        quotes = [("A", ts(0, m), 10.0 + m * 0.001, 10.0 + m * 0.001)
                  for m in range(0, 390, 15)]
        tdf, qdf = frames([("A", ts(0, 1), 10.0, 100)], quotes)
        bars = build_bars(tdf, qdf, cal2)
        legs = [quote_returns(bars, leg).values for leg in ("bid", "ask", "mid")]
        assert np.array_equal(legs[0], legs[1], equal_nan=True)
        assert np.array_equal(legs[0], legs[2], equal_nan=True)


class TestDerivedVariables:
    def test_dlog_volume(self, cal2):
        tdf, qdf = frames(
            [("A", ts(0, 1), 10.0, 1000), ("A", ts(0, 31), 10.0, 2000)],
            [("A", ts(0, 0), 9.99, 10.01)],
        )
        bars = build_bars(tdf, qdf, cal2)
        dv = derived_variables(bars)
        assert dv["dlog_volume"].values[0, 1] == pytest.approx(np.log(2.0))

    def test_zero_abs_return_denominator_missing(self, cal2):
        tdf, qdf = frames(
            [("A", ts(0, 1), 10.0, 100), ("A", ts(0, 31), 10.0, 100),
             ("A", ts(0, 61), 10.5, 100)],
            [("A", ts(0, 0), 9.99, 10.01)],
        )
        bars = build_bars(tdf, qdf, cal2)
        dv = derived_variables(bars)
        # |r(1)| = 0, so the slot-2 percentage change is undefined
        assert np.isnan(dv["pct_abs_return"].values[0, 2])

    def test_delta_oi_in_shares(self, cal2):
        # OI 25,000 then 10,000: change is -15,000 shares
        tdf, qdf = frames(
            [("A", ts(0, 1), 10.02, 25_000), ("A", ts(0, 31), 10.02, 10_000)],
            [("A", ts(0, 0), 9.99, 10.01)],
        )
        bars = build_bars(tdf, qdf, cal2)
        assert bars.oi[0, 0] == 25_000 and bars.oi[0, 1] == 10_000
        dv = derived_variables(bars)
        assert dv["d_oi"].values[0, 1] == -15_000.0

    def test_chain_across_overnight(self, cal2):
        tdf, qdf = frames(
            [("A", ts(0, 389), 10.0, 1000), ("A", ts(1, 1), 10.0, 3000)],
            [("A", ts(0, 0), 9.99, 10.01)],
        )
        dv = derived_variables(build_bars(tdf, qdf, cal2))
        # day-open slot differences against the prior day's close slot
        assert dv["dlog_volume"].values[0, 13] == pytest.approx(np.log(3.0))

    def test_empty_bar_propagates(self, small_bars):
        dv = derived_variables(small_bars)
        empties = np.argwhere(small_bars.empty)
        if len(empties):
            i, t = empties[0]
            assert np.isnan(dv["dlog_volume"].values[i, t])
            if t + 1 < dv["dlog_volume"].values.shape[1]:
                assert np.isnan(dv["dlog_volume"].values[i, t + 1])

    def test_panel_alignment(self, small_bars, small_returns):
        dv = derived_variables(small_bars, small_returns)
        assert_panels_aligned(small_returns, *dv.values())
