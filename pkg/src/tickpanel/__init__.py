"""tickpanel: tick data to intraday cross-sectional statistics.

Pipeline: ingest trade/quote CSVs (or simulate a synthetic market with known
ground truth), aggregate into interval bars, sign trades, build aligned
symbol-by-interval panels, then run cross-sectional lag regressions with
Fama-MacBeth inference and decile long-short strategy analytics.
"""

__version__ = "0.1.0"

from .marketdata import (  # noqa: F401
    IngestStats,
    QuoteTick,
    SecurityMeta,
    TradeTick,
    TradingCalendar,
    load_quotes,
    load_trades,
)
from .bars import BarPanel, PanelMatrix, build_bars, derived_variables, quote_returns, txn_returns  # noqa: F401
from .signing import classify_trade, order_imbalance, sign_trades  # noqa: F401
from .regression import (  # noqa: F401
    FMStats,
    ResponseCurve,
    controlled_response,
    dimson_alpha,
    fm_stats,
    implied_weights,
    lag_response,
    multi_lag_response,
    variable_response,
    winsorize_monthly,
    xs_slope,
)
from .portfolio import (  # noqa: F401
    DecileReport,
    FilterSpec,
    StrategySpec,
    apply_filters,
    daily_spec,
    decile_assign,
    nondaily_spec,
    strategy_returns,
)
from .simkit import Injection, ResiliencyShock, SimConfig, VolumePeriodicity, oracle_ols, simulate  # noqa: F401
