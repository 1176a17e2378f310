from datetime import date

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tickpanel.marketdata import date_epoch_ms
from tickpanel.signing import (
    BUY,
    SELL,
    UNCLASSIFIED,
    classify_trade,
    last_distinct_prices,
    order_imbalance,
    sign_trades,
)

T0 = date_epoch_ms(date(2001, 1, 2)) + 36_000_000  # 10:00


class TestClassifyTrade:
    def test_above_mid_is_buy(self):
        assert classify_trade(10.05, 9.98, 10.02, None) == BUY

    def test_below_mid_is_sell(self):
        assert classify_trade(9.99, 9.98, 10.02, None) == SELL

    def test_at_mid_downtick_is_sell(self):
        assert classify_trade(10.00, 9.99, 10.01, 10.01) == SELL

    def test_at_mid_uptick_is_buy(self):
        assert classify_trade(10.00, 9.99, 10.01, 9.95) == BUY

    def test_at_mid_no_prior_distinct_unclassified(self):
        assert classify_trade(10.00, 9.99, 10.01, None) == UNCLASSIFIED

    def test_no_quote_unclassified(self):
        assert classify_trade(10.00, None, None, 9.95) == UNCLASSIFIED

    def test_locked_quote_goes_to_tick_test(self):
        # bid == ask: mid equals the price, tick test decides
        assert classify_trade(10.00, 10.00, 10.00, 9.99) == BUY


def test_last_distinct_prices():
    px = np.array([10.0, 10.0, 10.1, 10.1, 10.1, 10.0, 10.2])
    ref = last_distinct_prices(px)
    assert np.isnan(ref[0]) and np.isnan(ref[1])
    assert ref[2] == 10.0 and ref[3] == 10.0 and ref[4] == 10.0
    assert ref[5] == 10.1
    assert ref[6] == 10.0


class TestOrderImbalance:
    def test_paper_example(self):
        # 100,000 buyer-initiated vs 75,000 seller-initiated shares
        sides = np.array([BUY] * 4 + [SELL] * 3)
        sizes = np.array([25_000] * 4 + [25_000] * 3)
        oi, empty = order_imbalance(sides, sizes)
        assert oi == 25_000 and not empty

    def test_empty_interval(self):
        oi, empty = order_imbalance(np.array([]), np.array([]))
        assert oi == 0 and empty

    def test_single_buy(self):
        oi, _ = order_imbalance(np.array([BUY]), np.array([500]))
        assert oi == 500

    def test_unclassified_excluded(self):
        oi, _ = order_imbalance(np.array([BUY, UNCLASSIFIED]), np.array([100, 400]))
        assert oi == 100

    @given(st.lists(st.tuples(st.sampled_from([BUY, SELL, UNCLASSIFIED]),
                              st.integers(min_value=1, max_value=10_000)),
                    min_size=1, max_size=50))
    @settings(max_examples=100, deadline=None)
    def test_bounds_and_flip(self, trades):
        sides = np.array([t[0] for t in trades])
        sizes = np.array([t[1] for t in trades])
        oi, _ = order_imbalance(sides, sizes)
        classified = sizes[sides != UNCLASSIFIED].sum()
        assert abs(oi) <= classified <= sizes.sum()
        flipped, _ = order_imbalance(-sides, sizes)
        assert flipped == -oi


def _frames(trades, quotes):
    tdf = pd.DataFrame(trades, columns=["symbol", "ts_ms", "price", "size"])
    qdf = pd.DataFrame(quotes, columns=["symbol", "ts_ms", "bid", "ask"])
    return tdf, qdf


class TestSignTrades:
    def test_prevailing_quote_is_latest_at_or_before(self):
        tdf, qdf = _frames(
            [("A", T0 + 100, 10.05, 100)],
            [("A", T0, 9.90, 9.94), ("A", T0 + 100, 9.98, 10.02),
             ("A", T0 + 200, 11.0, 11.1)],
        )
        out = sign_trades(tdf, qdf).frame
        assert out.loc[0, "bid"] == 9.98 and out.loc[0, "ask"] == 10.02
        assert out.loc[0, "side"] == BUY

    def test_prior_day_quote_is_stale(self):
        prev = T0 - 86_400_000
        tdf, qdf = _frames([("A", T0, 10.00, 100)], [("A", prev, 9.98, 10.02)])
        out = sign_trades(tdf, qdf).frame
        assert np.isnan(out.loc[0, "bid"])
        assert out.loc[0, "side"] == UNCLASSIFIED

    def test_matches_scalar_classifier(self):
        rng = np.random.default_rng(42)
        n = 400
        ts = T0 + np.sort(rng.integers(0, 3_600_000, n))
        mid = 20.0 + np.round(np.cumsum(rng.normal(0, 0.01, n)), 2)
        px = np.round(mid + rng.choice([-0.01, 0.0, 0.01], n), 2)
        q_ts = ts - 1
        tdf, qdf = _frames(
            list(zip(["A"] * n, ts, px, [100] * n)),
            list(zip(["A"] * n, q_ts, np.round(mid - 0.01, 2), np.round(mid + 0.01, 2))),
        )
        fast = sign_trades(tdf, qdf).frame["side"].to_numpy()

        # independent oracle: scalar rule per trade, last distinct price by scan
        slow = np.empty(n, dtype=int)
        for i in range(n):
            j = np.searchsorted(q_ts, ts[i], side="right") - 1
            bid, ask = (None, None) if j < 0 else (round(mid[j] - 0.01, 2),
                                                   round(mid[j] + 0.01, 2))
            ld = None
            for k in range(i - 1, -1, -1):
                if px[k] != px[i]:
                    ld = px[k]
                    break
            slow[i] = classify_trade(px[i], bid, ask, ld)
        assert np.array_equal(fast, slow)

    def test_deterministic(self, small_sim):
        a = sign_trades(small_sim.trades, small_sim.quotes).frame["side"].to_numpy()
        b = sign_trades(small_sim.trades, small_sim.quotes).frame["side"].to_numpy()
        assert np.array_equal(a, b)

    def test_sim_trades_classified_exactly(self, small_sim):
        # generator prints at the coincident quote's bid or ask, so every
        # print classifies and matches its side by construction
        out = sign_trades(small_sim.trades, small_sim.quotes)
        frame = out.frame
        at_ask = frame["price"].to_numpy() == frame["ask"].to_numpy()
        at_bid = frame["price"].to_numpy() == frame["bid"].to_numpy()
        assert (at_ask | at_bid).all()
        assert np.array_equal(frame["side"].to_numpy(),
                              np.where(at_ask, BUY, SELL))
