"""Curve/table CSV files and log-x SVG line charts."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Mapping
from xml.sax.saxutils import escape

from .curves import Curve, CurveKind, SummaryTable
from .io import format_number

CURVE_COLUMNS = ("budget", "threshold", "count", "rate", "saturated")

_X_LABELS = {
    CurveKind.FROC: "False accepts",
    CurveKind.DIR: "False identifications",
    CurveKind.CRR: "Correctly identified faces",
}
_Y_LABELS = {
    CurveKind.FROC: "Detection rate",
    CurveKind.DIR: "Detection and identification rate",
    CurveKind.CRR: "Correct rejection rate",
}
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2")


def write_curve_csv(path, curve: Curve) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# facebench {curve.kind.value} curve denominator={curve.denominator}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for p in curve.points:
            writer.writerow(
                [
                    p.budget,
                    format_number(p.threshold),
                    p.positive_count,
                    "undefined" if p.rate is None else format_number(p.rate),
                    int(p.saturated),
                ]
            )


def write_table_csv(path, table: SummaryTable) -> None:
    """Wide table: one row per budget, ``*`` marks saturated cells."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# facebench summary; '*' = fewer negatives than budget, total count shown\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows(table.rows())


def curves_svg(curves: Mapping[str, Curve], title: str = "") -> str:
    """Render curves on a log-scaled budget axis and a 0..1 rate axis."""
    width, height = 640, 480
    left, right, top, bottom = 70, 150, 40, 60
    pw, ph = width - left - right, height - top - bottom

    budgets = [p.budget for c in curves.values() for p in c.points]
    lo = math.floor(math.log10(min(budgets))) if budgets else 0
    hi = math.ceil(math.log10(max(budgets))) if budgets else 1
    if hi <= lo:
        hi = lo + 1

    def sx(b: float) -> float:
        return left + (math.log10(b) - lo) / (hi - lo) * pw

    def sy(r: float) -> float:
        return top + (1 - r) * ph

    kind = next(iter(curves.values())).kind if curves else CurveKind.FROC
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(
            f'<text x="{left + pw / 2:.2f}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{escape(title)}</text>'
        )
    for e in range(lo, hi + 1):
        x = sx(10**e)
        out.append(f'<line x1="{x:.2f}" y1="{top}" x2="{x:.2f}" y2="{top + ph}" stroke="#ddd"/>')
        out.append(
            f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">1e{e}</text>'
        )
    for i in range(6):
        r = i / 5
        y = sy(r)
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#ddd"/>')
        out.append(
            f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12">{r:.1f}</text>'
        )
    out.append(
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>'
    )
    out.append(
        f'<text x="{left + pw / 2:.2f}" y="{height - 15}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{_X_LABELS[kind]}</text>'
    )
    out.append(
        f'<text x="18" y="{top + ph / 2:.2f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="13" transform="rotate(-90 18 {top + ph / 2:.2f})">{_Y_LABELS[kind]}</text>'
    )
    for n, (name, curve) in enumerate(curves.items()):
        color = _COLORS[n % len(_COLORS)]
        pts = [(sx(p.budget), sy(p.rate)) for p in curve.points if p.rate is not None]
        if pts:
            coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
            out.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
            )
        ly = top + 16 + 18 * n
        out.append(
            f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{left + pw + 34}" y="{ly + 4}" font-family="sans-serif" '
            f'font-size="12">{escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(
    curves: Mapping[str, Curve],
    tables: Mapping[str, SummaryTable],
    destination,
    svg: bool = True,
) -> list[Path]:
    """Write ``<name>.csv`` (and ``<name>.svg``) per curve plus one CSV per table.

    Output bytes depend only on the inputs.
    """
    dest = Path(destination)
    dest.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for name, curve in curves.items():
        path = dest / f"{name}.csv"
        write_curve_csv(path, curve)
        written.append(path)
        if svg:
            path = dest / f"{name}.svg"
            path.write_text(curves_svg({name: curve}, title=name), encoding="utf-8")
            written.append(path)
    for name, table in tables.items():
        path = dest / f"{name}.csv"
        write_table_csv(path, table)
        written.append(path)
    return written
