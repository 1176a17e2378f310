"""Table/figure emission: deterministic CSVs plus aligned-text views.

Returns are scaled to basis points (raw x 1e4) and rounded half-to-even at
two decimals; missing cells render as NA, never zero. Re-running on the same
inputs produces byte-identical files.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .portfolio import DecileReport
from .regression import ResponseCurve


def fmt_bp(raw: float | None) -> str:
    """Raw return -> basis points with banker's rounding at 2 decimals."""
    if raw is None or not np.isfinite(raw):
        return "NA"
    return f"{float(np.round(raw * 1e4, 2)):.2f}"


def fmt_stat(v: float | None, digits: int = 2) -> str:
    if v is None or not np.isfinite(v):
        return "NA"
    return f"{float(np.round(v, digits)):.{digits}f}"


@dataclass(frozen=True)
class TableSpec:
    table_id: str
    title: str
    columns: tuple[str, ...]


def write_table(spec: TableSpec, rows: list[dict], out_dir: str | Path) -> Path:
    """Write one table as CSV plus an aligned-text twin."""
    out = Path(out_dir) / "tables"
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"table_{spec.table_id}.csv"
    cols = spec.columns
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(str(r.get(c, "NA")) for c in cols))
    csv_path.write_text("\n".join(lines) + "\n")

    widths = [max(len(c), max((len(str(r.get(c, 'NA'))) for r in rows), default=0))
              for c in cols]
    txt = [spec.title, ""]
    txt.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
    for r in rows:
        txt.append("  ".join(str(r.get(c, "NA")).ljust(w) for c, w in zip(cols, widths)))
    (out / f"table_{spec.table_id}.txt").write_text("\n".join(txt) + "\n")
    return csv_path


def response_rows(curves: list[ResponseCurve]) -> list[dict]:
    return [{
        "lag": c.lag,
        "mean_bp": fmt_bp(c.fm_mean),
        "t_stat": fmt_stat(c.fm_t),
        "n_periods": c.n_periods,
    } for c in curves]


def emit_response_csv(curves: list[ResponseCurve], path: str | Path) -> None:
    """ResponseCurve export: `lag,mean_bp,t_stat,n_periods`."""
    lines = ["lag,mean_bp,t_stat,n_periods"]
    for r in response_rows(curves):
        lines.append(f"{r['lag']},{r['mean_bp']},{r['t_stat']},{r['n_periods']}")
    Path(path).write_text("\n".join(lines) + "\n")


def emit_table(spec: TableSpec, rows: list[dict], out_dir: str | Path) -> Path:
    """Format result rows into the table layout (bp cells, NA for missing)."""
    formatted = []
    for r in rows:
        fr = dict(r)
        if "mean_bp" in fr:
            v = fr["mean_bp"]
            fr["mean_bp"] = "NA" if v is None else f"{float(np.round(v, 2)):.2f}"
        if "t_stat" in fr:
            fr["t_stat"] = fmt_stat(fr["t_stat"])
        formatted.append(fr)
    return write_table(spec, formatted, out_dir)


def decile_table_rows(reports: list[DecileReport],
                      slices: list[str] | None = None) -> list[dict]:
    rows = []
    for rep in reports:
        rows.extend(rep.rows(slices))
    return rows


def emit_decile_csv(reports: list[DecileReport], path: str | Path,
                    slices: list[str] | None = None) -> None:
    """DecileReport export: `strategy,slice,decile,mean_bp,t_stat,n`."""
    lines = ["strategy,slice,decile,mean_bp,t_stat,n"]
    for r in decile_table_rows(reports, slices):
        mean = "NA" if r["mean_bp"] is None else f"{float(np.round(r['mean_bp'], 2)):.2f}"
        t = "NA" if r["t_stat"] is None else f"{float(np.round(r['t_stat'], 2)):.2f}"
        lines.append(f"{r['strategy']},{r['slice']},{r['decile']},{mean},{t},{r['n']}")
    Path(path).write_text("\n".join(lines) + "\n")


def emit_figure_data(series: dict[str, list[ResponseCurve]], out_dir: str | Path,
                     name: str) -> Path:
    """Long-format plot data: `lag,value,t_stat,series`, one row per (series, lag)."""
    out = Path(out_dir) / "figures"
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.csv"
    lines = ["lag,value,t_stat,series"]
    for label in sorted(series):
        for c in series[label]:
            lines.append(f"{c.lag},{fmt_bp(c.fm_mean)},{fmt_stat(c.fm_t)},{label}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_manifest(out_dir: str | Path, config_text: str, seed: int | None) -> Path:
    """Run manifest: config hash, seed, engine version. No timestamps, so
    identical runs produce identical manifests."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256(config_text.encode()).hexdigest()
    path = out / "run_manifest.txt"
    path.write_text(
        f"config_sha256 = {digest}\n"
        f"seed = {seed if seed is not None else 'none'}\n"
        f"engine_version = {__version__}\n"
    )
    return path
