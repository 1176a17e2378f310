"""Cross-sectional lag-response regressions and Fama-MacBeth aggregation.

Per interval t, current values are regressed across symbols on values lagged
k intervals; the slope series is then averaged over t, with t-statistics
using the plain mean/standard-error ratio (no autocorrelation correction by
default). A single-lag slope equals the return on a zero-cost portfolio
whose implied weights are exposed for audit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bars import PanelMatrix

SMALL_CROSS_SECTION = 30  # estimated but flagged below this many names


@dataclass
class FMStats:
    mean: float
    se: float
    t: float
    n_periods: int


def fm_stats(series: np.ndarray, robust_lags: int = 0) -> FMStats:
    """Fama-MacBeth mean and t over a per-interval coefficient series.

    NaN entries are skipped. ``robust_lags`` > 0 switches to a Newey-West
    style standard error (sensitivity option only; the default assumes the
    coefficient series is uncorrelated).
    """
    vals = series[np.isfinite(series)]
    n = len(vals)
    if n == 0:
        return FMStats(np.nan, np.nan, np.nan, 0)
    mean = float(vals.mean())
    if n < 2:
        return FMStats(mean, np.nan, np.nan, n)
    if robust_lags <= 0:
        se = float(vals.std(ddof=1) / np.sqrt(n))
    else:
        e = vals - mean
        var = float(e @ e) / n
        for lag in range(1, min(robust_lags, n - 1) + 1):
            w = 1.0 - lag / (robust_lags + 1.0)
            var += 2.0 * w * float(e[lag:] @ e[:-lag]) / n
        se = float(np.sqrt(max(var, 0.0) / n))
    t = mean / se if se > 0 else np.nan
    return FMStats(mean, se, t, n)


@dataclass
class ResponseCurve:
    """Per-lag slope series plus its Fama-MacBeth summary.

    Arrays are aligned to the global interval index; entries before the lag
    horizon or at skipped cross-sections are NaN.
    """

    lag: int
    gamma: np.ndarray
    alpha: np.ndarray
    n: np.ndarray
    calendar: object
    skipped_rank_deficient: int = 0
    flagged_small: int = 0
    stats: FMStats = field(init=False)

    def __post_init__(self):
        self.stats = fm_stats(self.gamma)

    @property
    def fm_mean(self) -> float:
        return self.stats.mean

    @property
    def fm_t(self) -> float:
        return self.stats.t

    @property
    def n_periods(self) -> int:
        return self.stats.n_periods

    def fm_for_slots(self, slots, robust_lags: int = 0) -> FMStats:
        """FM summary restricted to arrival intervals whose slot is in ``slots``."""
        slot = self.calendar.slot_of(np.arange(len(self.gamma)))
        keep = np.isin(slot, np.asarray(list(slots)))
        return fm_stats(np.where(keep, self.gamma, np.nan), robust_lags)


def xs_slope(y: np.ndarray, X: np.ndarray) -> np.ndarray | None:
    """OLS of y on regressors X (intercept added here). None if rank-deficient.

    Coefficients come back as [intercept, b_1, ..., b_p]; the single-regressor
    slope equals cov(y, x) / var(x).
    """
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n < p + 1:
        return None
    A = np.column_stack([np.ones(n), X])
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < p + 1:
        return None
    return coef


def implied_weights(x: np.ndarray) -> np.ndarray:
    """Zero-cost portfolio weights whose return is the single-lag slope.

    Satisfies sum(w) = 0 and w . x = 1, so w . y equals the OLS slope of y
    on x; the slope is the return on a portfolio with unit excess exposure
    to the lagged value.
    """
    x = np.asarray(x, dtype=np.float64)
    xc = x - x.mean()
    ssx = float(xc @ xc)
    if ssx == 0.0:
        raise ValueError("degenerate cross-section: lagged values are constant")
    return xc / ssx


def _single_lag_slopes(values: np.ndarray, k: int):
    """Column-vectorized per-t slope/intercept for y_t on y_{t-k}."""
    S, T = values.shape
    gamma = np.full(T, np.nan)
    alpha = np.full(T, np.nan)
    n_t = np.zeros(T, dtype=np.int64)
    if k <= 0 or k >= T:
        return gamma, alpha, n_t, 0

    y = values[:, k:]
    x = values[:, :-k]
    mask = np.isfinite(y) & np.isfinite(x)
    n = mask.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        sx = np.where(mask, x, 0.0).sum(axis=0)
        sy = np.where(mask, y, 0.0).sum(axis=0)
        mx = sx / n
        my = sy / n
        xc = np.where(mask, x - mx, 0.0)
        yc = np.where(mask, y - my, 0.0)
        sxx = (xc * xc).sum(axis=0)
        sxy = (xc * yc).sum(axis=0)
        xmax = np.where(mask, x, -np.inf).max(axis=0)
        xmin = np.where(mask, x, np.inf).min(axis=0)
        degenerate = (n >= 2) & (xmax == xmin)
        ok = (n >= 2) & (xmax > xmin)
        g = np.where(ok, sxy / np.where(sxx > 0, sxx, 1.0), np.nan)
        a = np.where(ok, my - g * mx, np.nan)

    gamma[k:] = g
    alpha[k:] = a
    n_t[k:] = np.where(ok | degenerate, n, 0)
    return gamma, alpha, n_t, int(degenerate.sum())


def lag_response(panel: PanelMatrix, k: int) -> ResponseCurve:
    """Slope of panel values at t on their own lag k, per t, FM-aggregated.

    Cross-sections with a constant regressor are skipped (counted), and
    those with fewer than 30 names are estimated but flagged.
    """
    if k < 1:
        raise ValueError("lag must be >= 1")
    gamma, alpha, n_t, n_skip = _single_lag_slopes(panel.values, k)
    flagged = int(((n_t > 0) & (n_t < SMALL_CROSS_SECTION) & np.isfinite(gamma)).sum())
    return ResponseCurve(k, gamma, alpha, n_t, panel.calendar,
                         skipped_rank_deficient=n_skip, flagged_small=flagged)


def variable_response(panel: PanelMatrix, k: int) -> ResponseCurve:
    """Lag response for a non-return panel (volume, OI, volatility, spread).

    Same engine as return responses, applied to the supplied variable.
    """
    return lag_response(panel, k)


def response_curves(panel: PanelMatrix, lags) -> list[ResponseCurve]:
    return [lag_response(panel, int(k)) for k in lags]


def multi_lag_response(panel: PanelMatrix, K: int = 65) -> list[ResponseCurve]:
    """Joint OLS of y_t on all lags 1..K per cross-section, FM per coefficient.

    Symbols must have every lag present at t; cross-sections with n <= K + 1
    are skipped. K = 1 reduces to the single-lag engine exactly.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if K == 1:
        return [lag_response(panel, 1)]

    vals = panel.values
    S, T = vals.shape
    gammas = np.full((K, T), np.nan)
    alphas = np.full(T, np.nan)
    n_t = np.zeros(T, dtype=np.int64)
    skipped = 0

    for t in range(K, T):
        y = vals[:, t]
        X = vals[:, t - K:t][:, ::-1]  # column j is lag j+1
        rows = np.isfinite(y) & np.isfinite(X).all(axis=1)
        n = int(rows.sum())
        if n <= K + 1:
            continue
        coef = xs_slope(y[rows], X[rows])
        if coef is None:
            skipped += 1
            continue
        alphas[t] = coef[0]
        gammas[:, t] = coef[1:]
        n_t[t] = n

    return [ResponseCurve(k, gammas[k - 1], alphas.copy(), n_t.copy(), panel.calendar,
                          skipped_rank_deficient=skipped)
            for k in range(1, K + 1)]


def controlled_response(ret_panel: PanelMatrix, controls: dict[str, PanelMatrix],
                        k: int) -> dict[str, ResponseCurve]:
    """Return response at lag k with same-lag controls (Eq.-4-style regression).

    Rows missing any control at t-k drop out of that cross-section. Returns
    one curve per coefficient, keyed 'return' plus each control tag.
    """
    tags = list(controls)
    vals = ret_panel.values
    S, T = vals.shape
    p = 1 + len(tags)
    coef_series = np.full((p, T), np.nan)
    alphas = np.full(T, np.nan)
    n_t = np.zeros(T, dtype=np.int64)
    skipped = 0

    ctrl_vals = [controls[tag].values for tag in tags]
    for t in range(k, T):
        y = vals[:, t]
        cols = [vals[:, t - k]] + [cv[:, t - k] for cv in ctrl_vals]
        X = np.column_stack(cols)
        rows = np.isfinite(y) & np.isfinite(X).all(axis=1)
        n = int(rows.sum())
        if n < p + 2:
            continue
        coef = xs_slope(y[rows], X[rows])
        if coef is None:
            skipped += 1
            continue
        alphas[t] = coef[0]
        coef_series[:, t] = coef[1:]
        n_t[t] = n

    out = {}
    for i, name in enumerate(["return"] + tags):
        out[name] = ResponseCurve(k, coef_series[i], alphas.copy(), n_t.copy(),
                                  ret_panel.calendar, skipped_rank_deficient=skipped)
    return out


def equal_weighted_market(panel: PanelMatrix) -> np.ndarray:
    """Equal-weighted mean of available returns at each interval."""
    with np.errstate(invalid="ignore"):
        return np.nanmean(panel.values, axis=0)


@dataclass
class DimsonResult:
    symbols: np.ndarray
    alpha: np.ndarray          # per-symbol intercept, NaN if excluded
    fitted: np.ndarray         # bool, symbol had enough history
    adjusted: PanelMatrix      # return minus fitted market exposure (alpha + residual)
    market: np.ndarray


def dimson_alpha(panel: PanelMatrix, market: np.ndarray | None = None,
                 leads_lags: int = 13) -> DimsonResult:
    """Market-model intercepts with contemporaneous market plus leads and lags.

    Nonsynchronous-trading correction: each symbol's returns are regressed on
    market returns at offsets -L..+L; the intercept reads as a risk-adjusted
    return (intraday riskless rate is zero). Edge intervals lacking a full
    lead/lag window are dropped from the fit; symbols without enough
    observations to identify all 2L+1 slopes are excluded.
    """
    vals = panel.values
    S, T = vals.shape
    L = leads_lags
    if market is None:
        market = equal_weighted_market(panel)
    offsets = np.arange(-L, L + 1)
    p = len(offsets)

    # market design rows for each usable t
    t_inner = np.arange(L, T - L)
    M = np.column_stack([market[t_inner + j] for j in offsets])
    m_ok = np.isfinite(M).all(axis=1)

    alpha = np.full(S, np.nan)
    fitted = np.zeros(S, dtype=bool)
    adjusted = np.full_like(vals, np.nan)

    for i in range(S):
        y = vals[i, t_inner]
        rows = np.isfinite(y) & m_ok
        n = int(rows.sum())
        if n < p + 2:
            continue
        coef = xs_slope(y[rows], M[rows])
        if coef is None:
            continue
        alpha[i] = coef[0]
        fitted[i] = True
        resid_rows = t_inner[rows]
        adjusted[i, resid_rows] = y[rows] - M[rows] @ coef[1:]

    adj_panel = PanelMatrix("dimson_adjusted", panel.symbols, adjusted, panel.calendar)
    return DimsonResult(panel.symbols, alpha, fitted, adj_panel, market)


def winsorize_monthly(values: np.ndarray, months: np.ndarray, level: float = 0.01
                      ) -> tuple[np.ndarray, list]:
    """Clip a per-interval series at its within-month percentile bounds.

    For each calendar month, values below the ``level`` percentile (above the
    1 - level one) are set to that percentile. Percentiles are the nearest
    kept order statistic ('higher' below, 'lower' above): that convention
    makes the clip exactly idempotent, which an interpolated percentile is
    not (clipping shifts the interpolated tail value on a second pass).
    Months with fewer than three finite observations come back unmodified
    and flagged.
    """
    values = np.asarray(values, dtype=np.float64)
    months = np.asarray(months)
    out = values.copy()
    flagged = []
    for m in np.unique(months):
        sel = months == m
        finite = sel & np.isfinite(values)
        n = int(finite.sum())
        if n == 0:
            continue
        if n < 3:
            flagged.append(m)
            continue
        lo = np.percentile(values[finite], level * 100.0, method="higher")
        hi = np.percentile(values[finite], (1.0 - level) * 100.0, method="lower")
        out[finite] = np.clip(values[finite], lo, hi)
    return out, flagged
