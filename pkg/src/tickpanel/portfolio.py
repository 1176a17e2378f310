"""Decile strategies on lagged-return signals, with filters and cost modes.

Strategies hold for one interval. A "daily" strategy sorts on the return at
a single lag that is a whole multiple of the day length; a "nondaily"
strategy sorts on the average return over an intraday window of lags.
Cost mode "cross" prices the long leg at the offer and the short leg at the
bid, capturing four transactions per round trip of the long-short pair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .bars import BarPanel, PanelMatrix
from .marketdata import SecurityMeta
from .regression import FMStats, fm_stats, winsorize_monthly

logger = logging.getLogger(__name__)

N_DECILES = 10


@dataclass(frozen=True)
class FilterSpec:
    """Formation-time eligibility filters; None disables a filter."""

    min_price: float | None = None          # last trade price at t-1, dollars
    min_avg_trades: float | None = None     # mean trades/interval over prior calendar month
    max_rel_spread: float | None = None     # quoted relative spread at holding-interval start
    size_tercile: str | None = None         # 'S' | 'M' | 'L' by prior year-end cap
    sp_member: bool | None = None
    slots: tuple[int, ...] | None = None    # arrival slots kept
    weekdays: tuple[int, ...] | None = None  # 1=Mon .. 5=Fri
    months: tuple[int, ...] | None = None    # 1..12
    turn_of_month: bool | None = None        # True: only first/last trading day of month


@dataclass(frozen=True)
class StrategySpec:
    name: str
    kind: str                   # 'daily' | 'nondaily'
    lag: int = 0                # daily: the single lag k
    window: tuple[int, int] = (0, 0)  # nondaily: inclusive lag range, e.g. (1, 12)
    cost_mode: str = "raw"      # 'raw' | 'cross'
    filters: FilterSpec = field(default_factory=FilterSpec)
    min_window_lags: int = 8    # nondaily: minimum lags present in the window

    def __post_init__(self):
        if self.kind not in ("daily", "nondaily"):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "daily" and self.lag < 1:
            raise ValueError("daily strategy needs lag >= 1")
        if self.kind == "nondaily" and not (1 <= self.window[0] <= self.window[1]):
            raise ValueError("nondaily strategy needs a valid lag window")
        if self.cost_mode not in ("raw", "cross"):
            raise ValueError(f"unknown cost mode {self.cost_mode!r}")


def daily_spec(day: int, intervals_per_day: int = 13, **kw) -> StrategySpec:
    k = day * intervals_per_day
    return StrategySpec(name=kw.pop("name", f"day{day}_daily"), kind="daily", lag=k, **kw)


def nondaily_spec(day: int, intervals_per_day: int = 13, **kw) -> StrategySpec:
    P = intervals_per_day
    window = ((day - 1) * P + 1, day * P - 1)
    return StrategySpec(name=kw.pop("name", f"day{day}_nondaily"), kind="nondaily",
                        window=window, **kw)


def decile_assign(values: np.ndarray, n_deciles: int = N_DECILES) -> np.ndarray:
    """Split a cross-section into deciles 1..10 (lowest to highest value).

    Sizes differ by at most one: n = 10q + r puts q+1 names in the r
    lowest-numbered deciles. Ties break by ascending position (symbol order),
    so assignment is deterministic.
    """
    n = len(values)
    if n < n_deciles:
        raise ValueError(f"need at least {n_deciles} values, got {n}")
    order = np.lexsort((np.arange(n), values))
    q, r = divmod(n, n_deciles)
    sizes = np.full(n_deciles, q, dtype=np.int64)
    sizes[:r] += 1
    labels = np.empty(n, dtype=np.int64)
    labels[order] = np.repeat(np.arange(1, n_deciles + 1), sizes)
    return labels


def formation_signal(spec: StrategySpec, ret: PanelMatrix) -> np.ndarray:
    """Per-(symbol, t) sort signal: lagged return or mean over a lag window."""
    vals = ret.values
    S, T = vals.shape
    if spec.kind == "daily":
        sig = np.full_like(vals, np.nan)
        if spec.lag < T:
            sig[:, spec.lag:] = vals[:, :-spec.lag]
        return sig

    lo, hi = spec.window
    width = hi - lo + 1
    finite = np.isfinite(vals)
    fv = np.where(finite, vals, 0.0)
    csum = np.concatenate([np.zeros((S, 1)), np.cumsum(fv, axis=1)], axis=1)
    ccnt = np.concatenate([np.zeros((S, 1), dtype=np.int64),
                           np.cumsum(finite, axis=1)], axis=1)
    sig = np.full_like(vals, np.nan)
    # window over columns t-hi .. t-lo  ==  csum[t-lo+1] - csum[t-hi]
    t = np.arange(hi, T)
    wsum = csum[:, t - lo + 1] - csum[:, t - hi]
    wcnt = ccnt[:, t - lo + 1] - ccnt[:, t - hi]
    need = max(spec.min_window_lags, 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        sig[:, hi:] = np.where(wcnt >= need, wsum / wcnt, np.nan)
    del width
    return sig


def _prior_month_avg_trades(bars: BarPanel) -> np.ndarray:
    """(S, T): mean trades per interval over the previous calendar month; NaN if none."""
    cal = bars.calendar
    P = cal.intervals_per_day
    months = cal.month_of_day()
    uniq = list(dict.fromkeys(months.tolist()))
    S = len(bars.symbols)
    month_avg = {}
    for m in uniq:
        cols = np.repeat(months == m, P)
        month_avg[m] = bars.trades[:, cols].mean(axis=1)
    out = np.full((S, cal.n_intervals), np.nan)
    for i, m in enumerate(uniq):
        if i == 0:
            continue
        cols = np.repeat(months == m, P)
        out[:, cols] = month_avg[uniq[i - 1]][:, None]
    return out


def _size_terciles(bars: BarPanel, meta: SecurityMeta) -> dict[int, np.ndarray]:
    """Per calendar year: 'S'/'M'/'L'/'' labels from prior year-end caps."""
    out = {}
    for year in sorted(set(bars.calendar.year_of_day().tolist())):
        caps = meta.cap_vector(bars.symbols, year - 1)
        labels = np.full(len(caps), "", dtype="U1")
        have = np.isfinite(caps)
        if have.sum() >= 3:
            lo, hi = np.percentile(caps[have], [100 / 3, 200 / 3])
            labels[have & (caps <= lo)] = "S"
            labels[have & (caps > lo) & (caps <= hi)] = "M"
            labels[have & (caps > hi)] = "L"
        elif have.any():
            logger.warning("year %d: too few caps for terciles", year)
        out[year] = labels
    return out


def apply_filters(spec: StrategySpec, bars: BarPanel, meta: SecurityMeta | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Eligibility from the spec's filters.

    Returns (eligible (S, T) bool over symbols, t_keep (T,) bool over arrival
    intervals). Filters are pure set intersections, so evaluation order never
    matters. Symbols lacking metadata are excluded only from the
    metadata-dependent filters.
    """
    masks = filter_masks(spec.filters, bars, meta)
    S, T = len(bars.symbols), bars.calendar.n_intervals
    eligible = np.ones((S, T), dtype=bool)
    t_keep = np.ones(T, dtype=bool)
    for name, m in masks.items():
        if m.ndim == 1:
            t_keep &= m
        else:
            eligible &= m
    return eligible, t_keep


def filter_masks(f: FilterSpec, bars: BarPanel, meta: SecurityMeta | None = None
                 ) -> dict[str, np.ndarray]:
    """Individual filter masks keyed by filter name ((S, T) or (T,) boolean)."""
    cal = bars.calendar
    P = cal.intervals_per_day
    S, T = len(bars.symbols), cal.n_intervals
    masks: dict[str, np.ndarray] = {}

    if f.min_price is not None:
        px = np.full((S, T), np.nan)
        px[:, 1:] = bars.last[:, :-1]
        masks["min_price"] = np.isfinite(px) & (px >= f.min_price)
    if f.min_avg_trades is not None:
        avg = _prior_month_avg_trades(bars)
        masks["min_avg_trades"] = np.isfinite(avg) & (avg >= f.min_avg_trades)
    if f.max_rel_spread is not None:
        rs = bars.open_rel_spread
        masks["max_rel_spread"] = np.isfinite(rs) & (rs <= f.max_rel_spread)
    if f.size_tercile is not None:
        if meta is None:
            raise ValueError("size tercile filter needs security metadata")
        terciles = _size_terciles(bars, meta)
        years = cal.year_of_day()
        m = np.zeros((S, T), dtype=bool)
        for year, labels in terciles.items():
            cols = np.repeat(years == year, P)
            m[:, cols] = (labels == f.size_tercile)[:, None]
        masks["size_tercile"] = m
    if f.sp_member is not None:
        if meta is None:
            raise ValueError("index membership filter needs security metadata")
        years = cal.year_of_day()
        m = np.zeros((S, T), dtype=bool)
        for year in sorted(set(years.tolist())):
            cols = np.repeat(years == year, P)
            m[:, cols] = (meta.sp_vector(bars.symbols, year) == f.sp_member)[:, None]
        masks["sp_member"] = m

    slot_t = cal.slot_of(np.arange(T))
    day_t = cal.day_of(np.arange(T))
    if f.slots is not None:
        masks["slots"] = np.isin(slot_t, np.asarray(f.slots))
    if f.weekdays is not None:
        masks["weekdays"] = np.isin(cal.weekday_of_day()[day_t], np.asarray(f.weekdays))
    if f.months is not None:
        month_no = cal.month_of_day() % 100
        masks["months"] = np.isin(month_no[day_t], np.asarray(f.months))
    if f.turn_of_month is not None:
        tom = cal.turn_of_month_days()[day_t]
        masks["turn_of_month"] = tom if f.turn_of_month else ~tom
    return masks


@dataclass
class DecileReport:
    """Per-interval decile returns and the 10-1 spread for one strategy."""

    spec: StrategySpec
    calendar: object
    decile_means: np.ndarray   # (10, T) holding returns, NaN where not run
    spread: np.ndarray         # (T,) decile 10 minus decile 1 (or cost-mode legs)
    counts: np.ndarray         # (10, T) names per decile
    skipped_intervals: int = 0
    winsorize_flags: list = field(default_factory=list)

    def fm_spread(self, t_mask: np.ndarray | None = None) -> FMStats:
        s = self.spread if t_mask is None else np.where(t_mask, self.spread, np.nan)
        return fm_stats(s)

    def fm_decile(self, decile: int, t_mask: np.ndarray | None = None) -> FMStats:
        s = self.decile_means[decile - 1]
        if t_mask is not None:
            s = np.where(t_mask, s, np.nan)
        return fm_stats(s)

    def winsorized(self, level: float = 0.01) -> "DecileReport":
        """Clip each return series at within-month percentiles (Table-VIII style).

        The winsorized spread is the clipped 10-1 series itself, so the
        exact spread identity applies to the raw report only.
        """
        cal = self.calendar
        months = cal.month_of_day()[cal.day_of(np.arange(len(self.spread)))]
        spread_w, flags = winsorize_monthly(self.spread, months, level)
        dm = np.stack([winsorize_monthly(row, months, level)[0]
                       for row in self.decile_means])
        return DecileReport(self.spec, cal, dm, spread_w, self.counts,
                            self.skipped_intervals, list(flags))

    def slice_masks(self) -> dict[str, np.ndarray]:
        """Arrival-interval report slices: slot, open/mid/close, weekday, month, tom."""
        cal = self.calendar
        T = len(self.spread)
        slot = cal.slot_of(np.arange(T))
        day = cal.day_of(np.arange(T))
        P = cal.intervals_per_day
        wk = cal.weekday_of_day()[day]
        mo = cal.month_of_day()[day] % 100
        tom = cal.turn_of_month_days()[day]
        masks = {"all": np.ones(T, dtype=bool),
                 "slot=open": slot == 0,
                 "slot=mid": (slot >= 1) & (slot <= P - 2),
                 "slot=close": slot == P - 1}
        for s in range(P):
            masks[f"slot={s}"] = slot == s
        for w in range(1, 6):
            masks[f"weekday={w}"] = wk == w
        for m in sorted(set(mo.tolist())):
            masks[f"month={m}"] = mo == m
        masks["tom=1"] = tom
        masks["tom=0"] = ~tom
        return masks

    def rows(self, slices: list[str] | None = None, base_slice: str = "") -> list[dict]:
        """Tidy rows `strategy,slice,decile,mean_bp,t_stat,n` (missing cells NA)."""
        masks = self.slice_masks()
        keys = slices if slices is not None else ["all", "slot=open", "slot=mid", "slot=close"]
        out = []
        for key in keys:
            mask = masks[key]
            label = key if not base_slice else (base_slice if key == "all"
                                                else f"{base_slice}&{key}")
            for d in range(1, N_DECILES + 1):
                st = self.fm_decile(d, mask)
                out.append({"strategy": self.spec.name, "slice": label, "decile": str(d),
                            "mean_bp": st.mean * 1e4 if np.isfinite(st.mean) else None,
                            "t_stat": st.t if np.isfinite(st.t) else None,
                            "n": st.n_periods})
            st = self.fm_spread(mask)
            out.append({"strategy": self.spec.name, "slice": label, "decile": "10-1",
                        "mean_bp": st.mean * 1e4 if np.isfinite(st.mean) else None,
                        "t_stat": st.t if np.isfinite(st.t) else None,
                        "n": st.n_periods})
        return out


def cost_legs(bars: BarPanel) -> tuple[np.ndarray, np.ndarray]:
    """Cross-spread holding returns: buy at the open offer / sell at the close bid.

    long leg = close bid / open ask - 1; short leg = -(close ask / open bid - 1).
    """
    with np.errstate(invalid="ignore", divide="ignore"):
        long_leg = bars.close_bid / bars.open_ask - 1.0
        short_leg = -(bars.close_ask / bars.open_bid - 1.0)
    return long_leg, short_leg


def strategy_returns(spec: StrategySpec, bars: BarPanel, ret: PanelMatrix,
                     meta: SecurityMeta | None = None,
                     holding: PanelMatrix | None = None) -> DecileReport:
    """Run one decile strategy over every eligible arrival interval.

    Deciles are formed on the lagged-return signal among symbols passing the
    filters; holding returns are equal-weighted within deciles. In cost mode
    the reported decile return is the long (buy) leg and the 10-1 spread is
    long leg of decile 10 plus short leg of decile 1. Intervals with fewer
    than 10 eligible names are skipped.
    """
    sig = formation_signal(spec, ret)
    hold = (holding.values if holding is not None else ret.values)
    eligible, t_keep = apply_filters(spec, bars, meta)

    S, T = sig.shape
    cross = spec.cost_mode == "cross"
    if cross:
        long_leg, short_leg = cost_legs(bars)
        ok_hold = np.isfinite(long_leg) & np.isfinite(short_leg)
    else:
        ok_hold = np.isfinite(hold)

    usable = np.isfinite(sig) & ok_hold & eligible
    decile_means = np.full((N_DECILES, T), np.nan)
    spread = np.full(T, np.nan)
    counts = np.zeros((N_DECILES, T), dtype=np.int64)
    skipped = 0

    first_t = spec.lag if spec.kind == "daily" else spec.window[1]
    for t in range(first_t, T):
        if not t_keep[t]:
            continue
        rows = np.nonzero(usable[:, t])[0]
        if len(rows) < N_DECILES:
            skipped += 1
            continue
        labels = decile_assign(sig[rows, t])
        if cross:
            ll = long_leg[rows, t]
            sl = short_leg[rows, t]
            for d in range(1, N_DECILES + 1):
                in_d = labels == d
                counts[d - 1, t] = in_d.sum()
                decile_means[d - 1, t] = ll[in_d].mean()
            spread[t] = ll[labels == N_DECILES].mean() + sl[labels == 1].mean()
        else:
            h = hold[rows, t]
            for d in range(1, N_DECILES + 1):
                in_d = labels == d
                counts[d - 1, t] = in_d.sum()
                decile_means[d - 1, t] = h[in_d].mean()
            spread[t] = decile_means[N_DECILES - 1, t] - decile_means[0, t]

    if skipped:
        logger.info("%s: skipped %d intervals with under %d eligible names",
                    spec.name, skipped, N_DECILES)
    return DecileReport(spec, ret.calendar, decile_means, spread, counts, skipped)


def cost_adjusted_spread(spec: StrategySpec, bars: BarPanel, ret: PanelMatrix,
                         meta: SecurityMeta | None = None) -> DecileReport:
    """Convenience wrapper: the spec forced into cross-spread cost mode."""
    return strategy_returns(replace(spec, cost_mode="cross"), bars, ret, meta)
