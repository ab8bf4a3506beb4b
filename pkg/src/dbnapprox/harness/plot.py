"""Gnuplot script generation for rate summaries."""
from __future__ import annotations

import math
import os
from typing import Optional

from ..errors import SchemaError
from .output import read_csv

REQUIRED = ("m", "mean_error", "bound")


def bound_slope(q: float) -> float:
    """Exponent of the Maurey-type bound in m."""
    return -(1.0 - 1.0 / min(float(q), 2.0))


def render_plot_script(csv_name: str, rows, q: float, title: str = "error vs m") -> str:
    m0 = float(rows[0]["m"])
    b0 = float(rows[0]["bound"])
    slope = bound_slope(q)
    return "\n".join([
        "# generated by dbnapprox; run with: gnuplot <this file>",
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set logscale xy",
        "set key top right",
        "set xlabel 'm'",
        "set ylabel 'error'",
        f"set title '{title} (q = {q!r})'",
        f"slope = {slope!r}",
        f"m0 = {m0!r}",
        f"b0 = {b0!r}",
        "bound(x) = b0 * (x / m0) ** slope",
        "set terminal pngcairo size 800,600",
        f"set output '{os.path.splitext(csv_name)[0]}.png'",
        f"plot '{csv_name}' using 'm':'mean_error' with linespoints title 'mean error', \\",
        f"     '{csv_name}' using 'm':'bound' with points title 'bound', \\",
        "     bound(x) with lines dashtype 2 title sprintf('m^{%.3f}', slope)",
        "",
    ])


def emit_plot_script(csv_path: str, q: Optional[float] = None, out_path: Optional[str] = None) -> str:
    """Write a gnuplot script for a rate summary CSV and return its path.

    ``q`` defaults to the one implied by the CSV's ``theory_slope`` column.
    """
    columns, rows = read_csv(csv_path)
    missing = [c for c in REQUIRED if c not in columns]
    if missing:
        raise SchemaError(f"{csv_path}: missing columns {', '.join(missing)}")
    if not rows:
        raise SchemaError(f"{csv_path}: no data rows")
    if q is None:
        if "theory_slope" not in columns:
            raise SchemaError(f"{csv_path}: q not given and no theory_slope column")
        s = float(rows[0]["theory_slope"])
        q = math.inf if s <= -1.0 else 1.0 / (1.0 + s)
    out_path = out_path or os.path.splitext(csv_path)[0] + ".gp"
    text = render_plot_script(os.path.basename(csv_path), rows, q)
    tmp = out_path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, out_path)
    return out_path
