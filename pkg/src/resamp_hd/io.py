"""Plain-text data input and deterministic CSV / SVG output."""

from __future__ import annotations

import csv
import io as _io
import math
import os
from typing import IO, Iterable, Sequence

import numpy as np

__all__ = [
    "DataFormatError",
    "read_data_csv",
    "read_vector",
    "format_value",
    "write_csv",
    "read_csv_rows",
    "svg_line_chart",
    "write_text",
]


class DataFormatError(ValueError):
    """Malformed input data."""


def _data_lines(text: str):
    lines = text.splitlines()
    # Leading comment lines (provenance headers) are skipped.
    i = 0
    while i < len(lines) and lines[i].lstrip().startswith("#"):
        i += 1
    return [(k + 1, ln) for k, ln in enumerate(lines) if k >= i and ln.strip()]


def read_data_csv(path) -> np.ndarray:
    """K x n matrix from a header-less CSV (one row per coordinate)."""
    with open(path, newline="") as fh:
        text = fh.read()
    rows = []
    for lineno, line in _data_lines(text):
        try:
            rows.append([float(c) for c in line.split(",")])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-numeric cell") from None
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    n = len(rows[0])
    for k, r in enumerate(rows):
        if len(r) != n:
            raise DataFormatError(f"{path}: row {k + 1} has {len(r)} columns, expected {n}")
    if n < 2:
        raise DataFormatError(f"{path}: need at least 2 observations (columns), got {n}")
    Y = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(Y)):
        raise DataFormatError(f"{path}: non-finite values")
    return Y


def read_vector(path) -> np.ndarray:
    """A vector stored one value per line or comma-separated."""
    with open(path) as fh:
        text = fh.read()
    vals = []
    for lineno, line in _data_lines(text):
        try:
            vals.extend(float(c) for c in line.replace(";", ",").split(",") if c.strip())
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-numeric value") from None
    return np.array(vals, dtype=np.float64)


def format_value(v) -> str:
    """Shortest round-trip text for floats; plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_csv(rows: Iterable[dict], columns: Sequence[str], out: str | os.PathLike | IO | None = None,
              comments: Sequence[str] = ()) -> str:
    """Write rows as CSV (with optional leading ``#`` lines); returns the text."""
    buf = _io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r.get(c, "")) for c in columns])
    text = buf.getvalue()
    if out is not None:
        write_text(text, out)
    return text


def write_text(text: str, out) -> None:
    if hasattr(out, "write"):
        out.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def read_csv_rows(path) -> tuple[list[str], list[dict]]:
    """Header and rows of a CSV written by :func:`write_csv` (comments skipped)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    rows = list(reader)
    return list(reader.fieldnames or []), rows


# ---------------------------------------------------------------------------
# SVG

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf")


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    x = start
    while x <= hi + 1e-12 * step:
        out.append(round(x, 12))
        x += step
    return out


def _fmt_tick(v: float) -> str:
    return f"{v:.6g}"


def svg_line_chart(series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
                   width: int = 640, height: int = 420) -> str:
    """Static SVG with one polyline (and markers) per series.

    ``series`` maps a legend label to ``(xs, ys)``. Non-finite points are
    dropped. Output depends only on the inputs.
    """
    ml, mr, mt, mb = 70, 150, 40, 55
    pw, ph = width - ml - mr, height - mt - mb
    pts = [(float(x), float(y)) for xs, ys in series.values() for x, y in zip(xs, ys)
           if math.isfinite(float(x)) and math.isfinite(float(y))]
    if pts:
        x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
        y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    pad = 0.05 * (y1 - y0) if y1 > y0 else 0.5
    y0, y1 = y0 - pad, y1 + pad

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{ml + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{_esc(title)}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        X = sx(t)
        out.append(f'<line x1="{X:.2f}" y1="{mt + ph}" x2="{X:.2f}" y2="{mt + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{mt + ph + 18}" text-anchor="middle">{_fmt_tick(t)}</text>')
    for t in _ticks(y0, y1):
        Y = sy(t)
        out.append(f'<line x1="{ml - 5}" y1="{Y:.2f}" x2="{ml}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<line x1="{ml}" y1="{Y:.2f}" x2="{ml + pw}" y2="{Y:.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{ml - 8}" y="{Y + 4:.2f}" text-anchor="end">{_fmt_tick(t)}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        p = [(sx(float(x)), sy(float(y))) for x, y in zip(xs, ys)
             if math.isfinite(float(x)) and math.isfinite(float(y))]
        if p:
            coords = " ".join(f"{a:.2f},{b:.2f}" for a, b in p)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}">'
                       f'<title>{_esc(label)}</title></polyline>')
            for a, b in p:
                out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{color}"/>')
        ly = mt + 10 + 18 * i
        lx = ml + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
