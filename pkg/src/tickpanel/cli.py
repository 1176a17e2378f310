"""Command-line entry point: simulate | bars | respond | deciles | report.

Configuration is a flat ``key = value`` text file with ``#`` comments; every
key can also be supplied as a ``--key value`` flag, which wins over the file.
Stages communicate only through the documented CSV formats, so each one can
be re-run in isolation. Unknown keys fail fast, naming the offender.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from datetime import date
from pathlib import Path

from . import report as report_mod
from .bars import build_bars, derived_variables, quote_returns, txn_returns
from .marketdata import SecurityMeta, TradingCalendar, load_quotes, load_trades
from .portfolio import FilterSpec, daily_spec, nondaily_spec, strategy_returns
from .regression import (
    controlled_response,
    dimson_alpha,
    lag_response,
    multi_lag_response,
)
from .simkit import Injection, ResiliencyShock, SimConfig, VolumePeriodicity, simulate

KNOWN_KEYS = {
    "data.trades", "data.quotes", "data.meta", "data.calendar",
    "out", "threads", "seed", "interval", "from", "to",
    "winsorize", "cost_mode", "dimson",
    "sim.symbols", "sim.days", "sim.vol_bp", "sim.half_spread", "sim.bounce_prob",
    "sim.trades_per_interval", "sim.injection_bp", "sim.injection_days",
    "sim.resiliency_bp", "sim.volume_amp", "sim.sp_fraction", "sim.start",
    "respond.max_lag", "respond.mode", "respond.variable", "respond.k",
    "deciles.days", "deciles.kinds", "deciles.min_price", "deciles.min_avg_trades",
    "deciles.max_rel_spread", "deciles.size_tercile", "deciles.sp",
}

DEFAULTS = {
    "out": "out",
    "threads": "1",
    "seed": "0",
    "interval": "30m",
    "winsorize": "off",
    "cost_mode": "raw",
    "dimson": "off",
    "sim.symbols": "100",
    "sim.days": "20",
    "sim.vol_bp": "10",
    "sim.half_spread": "0.01",
    "sim.bounce_prob": "0.5",
    "sim.trades_per_interval": "4",
    "sim.injection_bp": "0",
    "sim.injection_days": "40",
    "sim.resiliency_bp": "0",
    "sim.volume_amp": "0",
    "sim.sp_fraction": "0.3",
    "sim.start": "2001-01-02",
    "respond.max_lag": "65",
    "respond.mode": "simple",
    "respond.variable": "txn_return",
    "respond.k": "13",
    "deciles.days": "1,2,3,4,5",
    "deciles.kinds": "daily,nondaily",
}


class ConfigError(Exception):
    pass


def parse_config_file(path: str | Path) -> dict[str, str]:
    cfg: dict[str, str] = {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    for lineno, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{p}:{lineno}: unknown config key {key!r}")
        cfg[key] = value
    return cfg


def build_config(args: argparse.Namespace, overrides: list[str]) -> dict[str, str]:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(parse_config_file(args.config))
    flat = {
        "threads": args.threads, "out": args.out, "interval": args.interval,
        "from": getattr(args, "from_date", None), "to": args.to,
        "winsorize": args.winsorize, "cost_mode": args.cost_mode, "seed": args.seed,
    }
    for k, v in flat.items():
        if v is not None:
            cfg[k] = str(v)
    if len(overrides) % 2 != 0:
        raise ConfigError(f"dangling override flag: {overrides[-1]!r}")
    for flag, value in zip(overrides[::2], overrides[1::2]):
        if not flag.startswith("--"):
            raise ConfigError(f"expected --key value override, got {flag!r}")
        key = flag[2:]
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = value
    return cfg


def config_text(cfg: dict[str, str]) -> str:
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))


def _interval_ms(cfg: dict[str, str]) -> int:
    try:
        return {"30m": 1_800_000, "5m": 390_000}[cfg["interval"]]
    except KeyError:
        raise ConfigError(f"interval must be 30m or 5m, got {cfg['interval']!r}") from None


def _need(cfg: dict[str, str], key: str) -> str:
    if key not in cfg:
        raise ConfigError(f"missing required config key {key!r}")
    return cfg[key]


def _load_calendar(cfg: dict[str, str]) -> TradingCalendar:
    cal = TradingCalendar.from_file(_need(cfg, "data.calendar"), _interval_ms(cfg))
    lo = date.fromisoformat(cfg["from"]) if "from" in cfg else None
    hi = date.fromisoformat(cfg["to"]) if "to" in cfg else None
    if lo or hi:
        dates = [d for d in cal.dates
                 if (lo is None or d >= lo) and (hi is None or d <= hi)]
        if not dates:
            raise ConfigError("date range leaves no trading days")
        cal = TradingCalendar(dates, cal.interval_ms)
    return cal


def _load_inputs(cfg: dict[str, str]):
    cal = _load_calendar(cfg)
    trades, t_stats = load_trades(_need(cfg, "data.trades"), cal)
    quotes, q_stats = load_quotes(_need(cfg, "data.quotes"), cal)
    print(f"loaded {t_stats.emitted} trades ({t_stats.rejected} rejected, "
          f"{t_stats.out_of_session} out of session), {q_stats.emitted} quotes")
    return cal, trades, quotes


def cmd_simulate(cfg: dict[str, str]) -> int:
    sim_cfg = SimConfig(
        n_symbols=int(cfg["sim.symbols"]),
        n_days=int(cfg["sim.days"]),
        intervals_per_day={"30m": 13, "5m": 78}[cfg["interval"]],
        efficient_vol_bp=float(cfg["sim.vol_bp"]),
        half_spread=float(cfg["sim.half_spread"]),
        bounce_prob=float(cfg["sim.bounce_prob"]),
        trades_per_interval=int(cfg["sim.trades_per_interval"]),
        injection=(Injection(float(cfg["sim.injection_bp"]), int(cfg["sim.injection_days"]))
                   if float(cfg["sim.injection_bp"]) > 0 else None),
        resiliency=(ResiliencyShock(float(cfg["sim.resiliency_bp"]))
                    if float(cfg["sim.resiliency_bp"]) > 0 else None),
        volume_periodicity=(VolumePeriodicity(float(cfg["sim.volume_amp"]))
                            if float(cfg["sim.volume_amp"]) > 0 else None),
        sp_fraction=float(cfg["sim.sp_fraction"]),
        seed=int(cfg["seed"]),
        start=date.fromisoformat(cfg["sim.start"]),
    )
    sim = simulate(sim_cfg)
    paths = sim.write(cfg["out"])
    print(f"wrote {len(sim.trades)} trades, {len(sim.quotes)} quotes to {cfg['out']}")
    for name, p in paths.items():
        print(f"  {name}: {p}")
    return 0


def cmd_bars(cfg: dict[str, str]) -> int:
    cal, trades, quotes = _load_inputs(cfg)
    bars = build_bars(trades, quotes, cal, threads=int(cfg["threads"]))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    bars.export_csv(out / "bars.csv")
    print(f"wrote {out / 'bars.csv'} ({len(bars.symbols)} symbols x {cal.n_intervals} intervals)")
    return 0


def cmd_respond(cfg: dict[str, str]) -> int:
    cal, trades, quotes = _load_inputs(cfg)
    bars = build_bars(trades, quotes, cal, threads=int(cfg["threads"]))
    ret = txn_returns(bars)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    max_lag = int(cfg["respond.max_lag"])
    mode = cfg["respond.mode"]

    if mode == "simple":
        variable = cfg["respond.variable"]
        if variable == "txn_return":
            panel = ret
        elif variable in ("bid_return", "ask_return", "mid_return"):
            panel = quote_returns(bars, variable.split("_")[0])
        else:
            panels = derived_variables(bars, ret)
            if variable not in panels:
                raise ConfigError(f"unknown respond.variable {variable!r}")
            panel = panels[variable]
        curves = [lag_response(panel, k) for k in range(1, max_lag + 1)]
        report_mod.emit_response_csv(curves, out / f"curves_{variable}.csv")
        report_mod.emit_figure_data({variable: curves}, out, f"response_{variable}")
        print(f"wrote {out / f'curves_{variable}.csv'}")
    elif mode == "joint":
        curves = multi_lag_response(ret, max_lag)
        report_mod.emit_response_csv(curves, out / "curves_joint.csv")
        report_mod.emit_figure_data({"joint": curves}, out, "response_joint")
        print(f"wrote {out / 'curves_joint.csv'}")
    elif mode == "controlled":
        k = int(cfg["respond.k"])
        panels = derived_variables(bars, ret)
        controls = {tag: panels[tag]
                    for tag in ("dlog_volume", "pct_abs_return", "pct_rel_spread", "d_oi")}
        curves = controlled_response(ret, controls, k)
        report_mod.emit_response_csv(list(curves.values()), out / f"curves_controlled_k{k}.csv")
        names = "return," + ",".join(controls)
        print(f"wrote {out / f'curves_controlled_k{k}.csv'} (coefficients: {names})")
    else:
        raise ConfigError(f"respond.mode must be simple|joint|controlled, got {mode!r}")
    return 0


def _decile_filters(cfg: dict[str, str]) -> FilterSpec:
    return FilterSpec(
        min_price=float(cfg["deciles.min_price"]) if "deciles.min_price" in cfg else None,
        min_avg_trades=(float(cfg["deciles.min_avg_trades"])
                        if "deciles.min_avg_trades" in cfg else None),
        max_rel_spread=(float(cfg["deciles.max_rel_spread"])
                        if "deciles.max_rel_spread" in cfg else None),
        size_tercile=cfg.get("deciles.size_tercile"),
        sp_member=bool(int(cfg["deciles.sp"])) if "deciles.sp" in cfg else None,
    )


def cmd_deciles(cfg: dict[str, str]) -> int:
    cal, trades, quotes = _load_inputs(cfg)
    bars = build_bars(trades, quotes, cal, threads=int(cfg["threads"]))
    ret = txn_returns(bars)
    meta = SecurityMeta.from_file(cfg["data.meta"]) if "data.meta" in cfg else None

    holding = ret
    if cfg["dimson"] == "on":
        holding = dimson_alpha(ret).adjusted
        ret = holding

    cost_mode = cfg["cost_mode"]
    filters = _decile_filters(cfg)
    if cost_mode == "cross" and filters.max_rel_spread is None:
        filters = replace(filters, max_rel_spread=0.0010)

    P = cal.intervals_per_day
    days = [int(d) for d in cfg["deciles.days"].split(",") if d]
    kinds = [k.strip() for k in cfg["deciles.kinds"].split(",") if k.strip()]
    reports = []
    for day in days:
        if "daily" in kinds:
            spec = daily_spec(day, P, cost_mode=cost_mode, filters=filters)
            reports.append(strategy_returns(spec, bars, ret, meta))
        if "nondaily" in kinds:
            spec = nondaily_spec(day, P, cost_mode=cost_mode, filters=filters)
            reports.append(strategy_returns(spec, bars, ret, meta))
    if cfg["winsorize"] == "on":
        reports = [r.winsorized() for r in reports]

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    report_mod.emit_decile_csv(reports, out / "deciles.csv")
    print(f"wrote {out / 'deciles.csv'} ({len(reports)} strategies)")
    return 0


def cmd_report(cfg: dict[str, str]) -> int:
    out = Path(cfg["out"])
    made_any = False
    for curve_file in sorted(out.glob("curves_*.csv")):
        rows = [line.split(",") for line in curve_file.read_text().splitlines()[1:]]
        table_rows = [{"lag": r[0], "mean_bp": r[1], "t_stat": r[2], "n_periods": r[3]}
                      for r in rows]
        spec = report_mod.TableSpec(
            f"response_{curve_file.stem.removeprefix('curves_')}",
            f"Lag responses ({curve_file.stem.removeprefix('curves_')}), basis points",
            ("lag", "mean_bp", "t_stat", "n_periods"))
        report_mod.write_table(spec, table_rows, out)
        made_any = True
    deciles = out / "deciles.csv"
    if deciles.exists():
        rows = [line.split(",") for line in deciles.read_text().splitlines()[1:]]
        table_rows = [{"strategy": r[0], "slice": r[1], "decile": r[2],
                       "mean_bp": r[3], "t_stat": r[4], "n": r[5]} for r in rows]
        spec = report_mod.TableSpec(
            "deciles", "Decile strategy returns, basis points",
            ("strategy", "slice", "decile", "mean_bp", "t_stat", "n"))
        report_mod.write_table(spec, table_rows, out)
        made_any = True
    if not made_any:
        raise FileNotFoundError(f"no engine outputs found under {out}")
    report_mod.write_manifest(out, config_text(cfg), int(cfg["seed"]))
    print(f"wrote tables and manifest under {out}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "bars": cmd_bars,
    "respond": cmd_respond,
    "deciles": cmd_deciles,
    "report": cmd_report,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tickpanel",
        description="Intraday tick-to-statistics engine",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--out")
    parser.add_argument("--interval", choices=["30m", "5m"])
    parser.add_argument("--from", dest="from_date", metavar="YYYY-MM-DD")
    parser.add_argument("--to", metavar="YYYY-MM-DD")
    parser.add_argument("--winsorize", choices=["on", "off"])
    parser.add_argument("--cost-mode", dest="cost_mode", choices=["raw", "cross"])
    parser.add_argument("--seed", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args, overrides = parser.parse_known_args(argv)
    try:
        cfg = build_config(args, overrides)
        return COMMANDS[args.command](cfg)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
