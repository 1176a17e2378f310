"""Synthetic market generator with known ground truth, plus brute-force
statistical references.

The efficient log-mid of each symbol follows a driftless random walk sampled
at trade times (diffusion accrues on the session clock only; nothing moves
overnight). Quotes straddle the mid by a fixed half-spread and each print
hits the bid or the ask with a coin flip, so with zero efficient volatility
transaction returns are pure bid-ask bounce. Optional effects with exact,
independently computable consequences:

* periodic injection - each symbol owns one intraday slot (never the day's
  first); an AR(1) return shock lands at that slot's start every day, making
  same-slot returns on nearby days positively related. The autocorrelation
  decays to 0.05 at ``persistence_days`` days.
* resiliency shock - a transient mid offset on the last quote/print of an
  interval, gone by the next interval: midpoint returns pick up a one-lag
  reversal and nothing else.
* volume periodicity - trade sizes at the owned slot scale by a lognormal
  daily factor, giving log-volume changes the same daily periodicity.

Randomness comes from counter-based Philox streams keyed (seed, symbol), so
output is bit-identical for any symbol partitioning and any worker count.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np
import pandas as pd

from .marketdata import TradingCalendar

PHI_FLOOR = 0.05  # injection autocorrelation at the persistence horizon


@dataclass(frozen=True)
class Injection:
    amplitude_bp: float         # sd of the injected same-slot return shock
    persistence_days: int = 40
    period: int | None = None   # informational; equals intervals per day

    def phi(self) -> float:
        return PHI_FLOOR ** (1.0 / self.persistence_days)


@dataclass(frozen=True)
class ResiliencyShock:
    magnitude_bp: float  # sd of the transient end-of-interval mid offset


@dataclass(frozen=True)
class VolumePeriodicity:
    amplitude: float              # sd of the log size multiplier at the owned slot
    persistence_days: int = 40

    def phi(self) -> float:
        return PHI_FLOOR ** (1.0 / self.persistence_days)


@dataclass(frozen=True)
class SimConfig:
    n_symbols: int
    n_days: int
    intervals_per_day: int = 13
    efficient_vol_bp: float = 10.0      # per-interval sd of the efficient log mid
    half_spread: float = 0.01           # dollars each side of the mid
    bounce_prob: float = 0.5            # chance a print occurs at the ask
    trades_per_interval: int = 4
    base_price_range: tuple[float, float] = (20.0, 80.0)
    small_size: int = 100
    large_size: int = 2_000
    small_prob: float = 0.8
    injection: Injection | None = None
    resiliency: ResiliencyShock | None = None
    volume_periodicity: VolumePeriodicity | None = None
    sp_fraction: float = 0.3
    seed: int = 0
    start: date = date(2001, 1, 2)

    def __post_init__(self):
        if self.intervals_per_day not in (13, 78):
            raise ValueError("intervals_per_day must be 13 or 78")
        if self.efficient_vol_bp < 0 or self.half_spread < 0:
            raise ValueError("volatility and spread must be nonnegative")
        if self.trades_per_interval < 2:
            raise ValueError("need at least two trades per interval")

    @property
    def interval_ms(self) -> int:
        return {13: 1_800_000, 78: 390_000}[self.intervals_per_day]


@dataclass
class SimData:
    config: SimConfig
    calendar: TradingCalendar
    trades: pd.DataFrame
    quotes: pd.DataFrame
    meta: pd.DataFrame
    designated_slots: np.ndarray  # per symbol, the owned intraday slot
    base_mids: np.ndarray         # per symbol, rounded starting mid

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        """Emit trades/quotes/meta CSVs plus the calendar file."""
        import polars as pl

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "trades": out / "trades.csv",
            "quotes": out / "quotes.csv",
            "meta": out / "meta.csv",
            "calendar": out / "calendar.txt",
        }
        pl.from_pandas(self.trades).write_csv(paths["trades"])
        pl.from_pandas(self.quotes).write_csv(paths["quotes"])
        pl.from_pandas(self.meta).write_csv(paths["meta"])
        self.calendar.write(paths["calendar"])
        return paths


def _symbol_rng(seed: int, symbol_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, symbol_index]))


def _symbol_events(cfg: SimConfig, idx: int, day_opens: np.ndarray):
    """Generate one symbol's trades and quotes. Draw order is fixed."""
    rng = _symbol_rng(cfg.seed, idx)
    D, P, c = cfg.n_days, cfg.intervals_per_day, cfg.trades_per_interval
    w = cfg.interval_ms
    n = D * P * c
    sigma = cfg.efficient_vol_bp * 1e-4
    hs = cfg.half_spread

    base_mid = round(float(rng.uniform(*cfg.base_price_range)), 2)
    slot_own = int(rng.integers(1, P))

    # injection shocks: stationary AR(1) across days at the owned slot
    inj = np.zeros(D)
    if cfg.injection is not None and cfg.injection.amplitude_bp > 0:
        phi = cfg.injection.phi()
        eps = rng.standard_normal(D)
        u = np.empty(D)
        u[0] = eps[0]
        for d in range(1, D):
            u[d] = phi * u[d - 1] + np.sqrt(1.0 - phi * phi) * eps[d]
        inj = u * cfg.injection.amplitude_bp * 1e-4
    else:
        rng.standard_normal(D)

    # volume multiplier at the owned slot
    vol_mult = np.ones(D)
    if cfg.volume_periodicity is not None and cfg.volume_periodicity.amplitude > 0:
        phi = cfg.volume_periodicity.phi()
        eps = rng.standard_normal(D)
        v = np.empty(D)
        v[0] = eps[0]
        for d in range(1, D):
            v[d] = phi * v[d - 1] + np.sqrt(1.0 - phi * phi) * eps[d]
        vol_mult = np.exp(v * cfg.volume_periodicity.amplitude)
    else:
        rng.standard_normal(D)

    # trade times: offsets in (0, w) sorted within each interval
    offsets = rng.integers(1, w, size=(D, P, c))
    offsets.sort(axis=2)
    slot_idx = np.broadcast_to(np.arange(P)[None, :, None], (D, P, c))
    elapsed = (slot_idx * w + offsets).reshape(D, P * c)

    # diffusion on the session clock, restarting at each open from the prior close
    delta = np.diff(elapsed, axis=1, prepend=0).astype(np.float64) / w
    gauss = rng.standard_normal((D, P * c))
    steps = np.sqrt(delta) * sigma * gauss if sigma > 0 else np.zeros((D, P * c))
    if cfg.injection is not None and cfg.injection.amplitude_bp > 0:
        steps[:, slot_own * c] += inj
    logmid = np.log(base_mid) + np.cumsum(steps.reshape(-1))
    mid = np.exp(logmid)

    if cfg.resiliency is not None and cfg.resiliency.magnitude_bp > 0:
        z = rng.standard_normal((D, P)) * cfg.resiliency.magnitude_bp * 1e-4
        shift = np.zeros((D, P, c))
        shift[:, :, c - 1] = z
        mid = mid * np.exp(shift.reshape(-1))
    else:
        rng.standard_normal((D, P))

    q = np.where(rng.random(n) < cfg.bounce_prob, 1.0, -1.0)
    mid_r = np.round(mid, 4)
    bid = np.round(mid_r - hs, 4)
    ask = np.round(mid_r + hs, 4)
    price = np.where(q > 0, ask, bid)

    sizes = np.where(rng.random(n) < cfg.small_prob, cfg.small_size, cfg.large_size)
    if cfg.volume_periodicity is not None and cfg.volume_periodicity.amplitude > 0:
        day_of_trade = np.repeat(np.arange(D), P * c)
        at_slot = (np.tile(np.arange(P * c) // c, D) == slot_own)
        mult = np.where(at_slot, vol_mult[day_of_trade], 1.0)
        sizes = np.maximum(1, np.rint(sizes * mult).astype(np.int64))
    sizes = sizes.astype(np.int64)

    ts = (np.repeat(day_opens, P * c) + elapsed.reshape(-1)).astype(np.int64)

    # quotes: one at each session open (carrying the prior close mid), then at
    # every mid change; consecutive duplicates are dropped
    open_mid = np.empty(D)
    open_mid[0] = base_mid
    open_mid[1:] = mid_r.reshape(D, -1)[:-1, -1]
    # strip any resiliency shift from the carried-over open quote
    if cfg.resiliency is not None and cfg.resiliency.magnitude_bp > 0:
        prev_last = np.exp(logmid.reshape(D, -1)[:-1, -1])
        open_mid[1:] = np.round(prev_last, 4)
    open_bid = np.round(open_mid - hs, 4)
    open_ask = np.round(open_mid + hs, 4)

    q_ts = np.concatenate([day_opens, ts])
    q_bid = np.concatenate([open_bid, bid])
    q_ask = np.concatenate([open_ask, ask])
    order = np.argsort(q_ts, kind="stable")
    q_ts, q_bid, q_ask = q_ts[order], q_bid[order], q_ask[order]
    keep = np.r_[True, (q_bid[1:] != q_bid[:-1]) | (q_ask[1:] != q_ask[:-1])]
    # always keep session opens so each day has a prevailing quote from 09:30
    keep |= np.isin(q_ts, day_opens)

    return (ts, price, sizes,
            q_ts[keep], q_bid[keep], q_ask[keep],
            base_mid, slot_own)


def simulate(cfg: SimConfig) -> SimData:
    """Generate the full synthetic market (trades, quotes, metadata)."""
    calendar = TradingCalendar.generate(cfg.start, cfg.n_days, cfg.interval_ms)
    day_opens = np.array([calendar.day_open_ms(d) for d in range(cfg.n_days)],
                         dtype=np.int64)

    width = max(5, len(str(cfg.n_symbols - 1)))
    symbols = np.array([f"S{i:0{width}d}" for i in range(cfg.n_symbols)])

    t_parts, q_parts = [], []
    base_mids = np.empty(cfg.n_symbols)
    slots_own = np.empty(cfg.n_symbols, dtype=np.int64)
    for i in range(cfg.n_symbols):
        ts, px, sz, qts, qb, qa, base, own = _symbol_events(cfg, i, day_opens)
        t_parts.append((ts, px, sz))
        q_parts.append((qts, qb, qa))
        base_mids[i] = base
        slots_own[i] = own

    t_counts = [len(p[0]) for p in t_parts]
    q_counts = [len(p[0]) for p in q_parts]
    trades = pd.DataFrame({
        "symbol": np.repeat(symbols, t_counts),
        "ts_ms": np.concatenate([p[0] for p in t_parts]),
        "price": np.concatenate([p[1] for p in t_parts]),
        "size": np.concatenate([p[2] for p in t_parts]),
    })
    quotes = pd.DataFrame({
        "symbol": np.repeat(symbols, q_counts),
        "ts_ms": np.concatenate([p[0] for p in q_parts]),
        "bid": np.concatenate([p[1] for p in q_parts]),
        "ask": np.concatenate([p[2] for p in q_parts]),
    })

    # year-end caps (constant per symbol) and index membership for every year
    # a strategy could reference, including the year before the sample
    cap_rng = np.random.Generator(np.random.Philox(key=[cfg.seed, 1 << 40]))
    caps = np.exp(cap_rng.normal(np.log(2e9), 1.0, cfg.n_symbols))
    n_sp = int(round(cfg.sp_fraction * cfg.n_symbols))
    sp_rank = np.argsort(-caps, kind="stable")
    sp_flag = np.zeros(cfg.n_symbols, dtype=np.int64)
    sp_flag[sp_rank[:n_sp]] = 1
    years = list(range(cfg.start.year - 1, calendar.dates[-1].year + 1))
    meta = pd.DataFrame({
        "symbol": np.tile(symbols, len(years)),
        "year": np.repeat(np.array(years, dtype=np.int64), cfg.n_symbols),
        "market_cap": np.tile(np.round(caps, 2), len(years)),
        "sp500_flag": np.tile(sp_flag, len(years)),
    })

    return SimData(cfg, calendar, trades, quotes, meta, slots_own, base_mids)


# ---------------------------------------------------------------------------
# brute-force statistical references
# ---------------------------------------------------------------------------

def oracle_ols(y: np.ndarray, X: np.ndarray) -> np.ndarray | None:
    """Reference OLS: normal equations solved in extended precision.

    Same contract as the production solver (intercept prepended, coefficients
    [intercept, b_1, ..., b_p]); returns None when the system is singular.
    Exhaustive and slow on purpose; n is capped at 10,000.
    """
    y = np.asarray(y, dtype=np.longdouble)
    X = np.asarray(X, dtype=np.longdouble)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n > 10_000:
        raise ValueError("oracle_ols is capped at n <= 10,000")
    if n < p + 1:
        return None
    A = np.column_stack([np.ones(n, dtype=np.longdouble), X])
    G = A.T @ A
    b = A.T @ y
    m = p + 1
    aug = np.column_stack([G, b])
    scale = np.abs(G).max()
    if scale == 0:
        return None
    tol = m * np.finfo(np.longdouble).eps * scale * 64
    for col in range(m):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if np.abs(aug[piv, col]) <= tol:
            return None
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] = aug[col] / aug[col, col]
        for r in range(m):
            if r != col:
                aug[r] = aug[r] - aug[r, col] * aug[col]
    return aug[:, m].astype(np.float64)


def cost_spread_expected(base_mids: np.ndarray, half_spread: float) -> float:
    """Exact four-transaction cost identity for a flat market.

    With constant quotes and no true price motion, a decile long-short pair
    buys at the offer and sells at the bid on both legs; the expected 10-1
    return is the population mean of long plus short leg, i.e. minus two
    round-trip spreads.
    """
    m = np.round(np.asarray(base_mids, dtype=np.float64), 4)
    bid = np.round(m - half_spread, 4)
    ask = np.round(m + half_spread, 4)
    long_leg = bid / ask - 1.0
    short_leg = -(ask / bid - 1.0)
    return float(long_leg.mean() + short_leg.mean())


def _interval_return(rng, m, hs, sigma, bounce_prob, c, inj=None, slot0=False):
    """One synthetic interval return per symbol, mirrored from the generator.

    Exact in the bounce ratio; ignores sub-penny rounding and the slow drift
    of the mid level between base points (both far below test tolerances).
    """
    n = len(m)
    if slot0:
        u = rng.random((n, c))
        span = u.max(axis=1) - u.min(axis=1)
    else:
        v_prev = rng.random(n) ** (1.0 / c)
        v_cur = rng.random(n) ** (1.0 / c)
        span = 1.0 + v_cur - v_prev
    g = sigma * np.sqrt(span) * rng.standard_normal(n)
    if inj is not None and not slot0:
        g = g + inj
    q1 = np.where(rng.random(n) < bounce_prob, 1.0, -1.0)
    q2 = np.where(rng.random(n) < bounce_prob, 1.0, -1.0)
    p_start = m + q1 * hs
    p_end = m * np.exp(g) + q2 * hs
    return p_end / p_start - 1.0


@dataclass
class OracleEstimate:
    slope: float
    slope_se: float
    spread: float
    spread_se: float


def _decile_spread_independent(x: np.ndarray, y: np.ndarray) -> float:
    """Top minus bottom decile mean of y sorted by x; independent split logic."""
    order = np.argsort(x, kind="stable")
    parts = np.array_split(order, 10)
    return float(y[parts[-1]].mean() - y[parts[0]].mean())


def daily_lag_oracle(cfg: SimConfig, designated_slots: np.ndarray, base_mids: np.ndarray,
                     lag: int, reps: int = 200, seed: int = 987_654_321
                     ) -> OracleEstimate:
    """Model-implied response slope and 10-1 decile spread at a daily-multiple lag.

    Draws (formation, holding) return pairs straight from the generating
    model - no ticks, no bars, no engine code - for every arrival slot, and
    averages slots with the weights a Fama-MacBeth mean would use (equal, as
    every slot is estimable on the same number of days).
    """
    P = cfg.intervals_per_day
    if lag % P != 0 or lag == 0:
        raise ValueError("oracle covers daily-multiple lags only")
    days_apart = lag // P
    if cfg.injection is None:
        phi_j, amp = 0.0, 0.0
    else:
        phi_j = cfg.injection.phi() ** days_apart
        amp = cfg.injection.amplitude_bp * 1e-4
    sigma = cfg.efficient_vol_bp * 1e-4
    hs, c, bp = cfg.half_spread, cfg.trades_per_interval, cfg.bounce_prob
    m = np.asarray(base_mids, dtype=np.float64)
    own = np.asarray(designated_slots)

    rng = np.random.Generator(np.random.Philox(key=[seed, lag]))
    slopes, spreads = [], []
    for _ in range(reps):
        for s in range(P):
            u1 = rng.standard_normal(len(m))
            u2 = phi_j * u1 + np.sqrt(1.0 - phi_j ** 2) * rng.standard_normal(len(m))
            hit = (own == s) & (s >= 1)
            inj_x = amp * u1 * hit
            inj_y = amp * u2 * hit
            x = _interval_return(rng, m, hs, sigma, bp, c, inj=inj_x, slot0=(s == 0))
            y = _interval_return(rng, m, hs, sigma, bp, c, inj=inj_y, slot0=(s == 0))
            xc = x - x.mean()
            slopes.append(float((xc @ (y - y.mean())) / (xc @ xc)))
            spreads.append(_decile_spread_independent(x, y))
    slopes = np.array(slopes)
    spreads = np.array(spreads)
    return OracleEstimate(
        float(slopes.mean()), float(slopes.std(ddof=1) / np.sqrt(len(slopes))),
        float(spreads.mean()), float(spreads.std(ddof=1) / np.sqrt(len(spreads))),
    )


@dataclass
class RollOracle:
    all_slots: float      # expected lag-1 slope FM-averaged over every arrival slot
    all_slots_se: float
    interior: float       # expected slope away from the day boundary (-1/2 when sigma=0)
    interior_se: float


def roll_lag1_oracle(cfg: SimConfig, base_mids: np.ndarray, reps: int = 200,
                     seed: int = 192_837_465) -> RollOracle:
    """Model-implied lag-1 transaction-return slope (bid-ask bounce reversal).

    Adjacent intervals share their boundary print, so consecutive returns are
    negatively related; with zero efficient volatility the interior-slot
    slope is exactly -1/2. Day-open arrivals re-base on the first in-session
    trade and share nothing with the prior day, diluting the all-slot mean.
    The estimate weights slots the way the engine's Fama-MacBeth mean does.
    """
    P, c, bp = cfg.intervals_per_day, cfg.trades_per_interval, cfg.bounce_prob
    sigma = cfg.efficient_vol_bp * 1e-4
    hs = cfg.half_spread
    m = np.asarray(base_mids, dtype=np.float64)
    n = len(m)
    rng = np.random.Generator(np.random.Philox(key=[seed, 1]))

    def bounce(size):
        return np.where(rng.random(size) < bp, 1.0, -1.0)

    slopes_by_case = {"interior": [], "after_open": [], "open": []}
    for _ in range(reps):
        # shared boundary print: r1 = p1/p0 - 1, r2 = p2/p1 - 1
        for case in ("interior", "after_open", "open"):
            if case == "open":
                # x: prior-day close interval, y: day-open interval (disjoint)
                x = _interval_return(rng, m, hs, sigma, bp, c)
                y = _interval_return(rng, m, hs, sigma, bp, c, slot0=True)
            else:
                if case == "after_open":
                    u = rng.random((n, c))
                    span1 = u.max(axis=1) - u.min(axis=1)
                else:
                    span1 = 1.0 + rng.random(n) ** (1.0 / c) - rng.random(n) ** (1.0 / c)
                span2 = 1.0 + rng.random(n) ** (1.0 / c) - rng.random(n) ** (1.0 / c)
                g1 = sigma * np.sqrt(np.maximum(span1, 0)) * rng.standard_normal(n)
                g2 = sigma * np.sqrt(np.maximum(span2, 0)) * rng.standard_normal(n)
                q0, q1, q2 = bounce(n), bounce(n), bounce(n)
                p0 = m + q0 * hs
                p1 = m * np.exp(g1) + q1 * hs
                p2 = m * np.exp(g1 + g2) + q2 * hs
                x = p1 / p0 - 1.0
                y = p2 / p1 - 1.0
            xc = x - x.mean()
            slopes_by_case[case].append(float((xc @ (y - y.mean())) / (xc @ xc)))

    # arrival-slot weights for the all-slot FM mean: interior slots 2..P-1,
    # slot 1 pairs against the day-open return, slot 0 spans the overnight gap
    w = {"interior": P - 2, "after_open": 1, "open": 1}
    per_case = {k: np.array(v) for k, v in slopes_by_case.items()}
    mean = sum(w[k] * per_case[k].mean() for k in w) / P
    var = sum((w[k] / P) ** 2 * per_case[k].var(ddof=1) / reps for k in w)
    interior = per_case["interior"]
    return RollOracle(float(mean), float(np.sqrt(var)),
                      float(interior.mean()),
                      float(interior.std(ddof=1) / np.sqrt(reps)))
