from datetime import date

import numpy as np
import pytest

from tickpanel.bars import build_bars, txn_returns
from tickpanel.marketdata import TradingCalendar
from tickpanel.simkit import SimConfig, simulate


@pytest.fixture(scope="session")
def cal_week():
    return TradingCalendar.generate(date(2001, 1, 2), 5)


@pytest.fixture(scope="session")
def small_sim():
    cfg = SimConfig(n_symbols=40, n_days=8, seed=123, efficient_vol_bp=12.0,
                    half_spread=0.01, trades_per_interval=3)
    return simulate(cfg)


@pytest.fixture(scope="session")
def small_bars(small_sim):
    return build_bars(small_sim.trades, small_sim.quotes, small_sim.calendar)


@pytest.fixture(scope="session")
def small_returns(small_bars):
    return txn_returns(small_bars)


def assert_panels_aligned(*panels):
    shapes = {p.values.shape for p in panels}
    assert len(shapes) == 1
    for p in panels[1:]:
        assert np.array_equal(p.symbols, panels[0].symbols)
