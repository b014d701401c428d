from __future__ import annotations

import xml.etree.ElementTree as ET

from facebench.curves import DEFAULT_BUDGETS, build_curve, summary_table
from facebench.matching import NegativeTag, ScorePartition
from facebench.report import curves_svg, emit_report


def _curve(n_pos, n_neg, denominator=100):
    pos = tuple(i / 100 for i in range(n_pos))
    neg = tuple(i / 97 for i in range(n_neg))
    p = ScorePartition(pos, tuple(range(n_pos)), {NegativeTag.FALSE_ACCEPT: neg} if neg else {}, denominator)
    return build_curve(p, DEFAULT_BUDGETS, "FROC")


def test_five_budget_curve_gives_five_rows(tmp_path):
    emit_report({"froc_a": _curve(50, 20)}, {}, tmp_path, svg=False)
    lines = (tmp_path / "froc_a.csv").read_text().splitlines()
    assert lines[1] == "budget,threshold,count,rate,saturated"
    assert len(lines) == 2 + 5
    assert lines[3].endswith(",1")  # budget 100 with only 20 negatives


def test_two_participants(tmp_path):
    curves = {"a": _curve(50, 20), "b": _curve(30, 200)}
    table = summary_table(curves)
    written = emit_report({f"froc_{n}": c for n, c in curves.items()}, {"froc_summary": table}, tmp_path)
    assert sorted(p.name for p in written) == [
        "froc_a.csv", "froc_a.svg", "froc_b.csv", "froc_b.svg", "froc_summary.csv"
    ]
    assert (tmp_path / "froc_summary.csv").read_text().splitlines()[1] == "budget,a,b"


def test_undefined_rate(tmp_path):
    emit_report({"c": _curve(0, 3, denominator=0)}, {}, tmp_path, svg=False)
    assert "undefined" in (tmp_path / "c.csv").read_text()


def test_byte_identical_regeneration(tmp_path):
    curves = {"a": _curve(50, 20), "b": _curve(30, 200)}
    tables = {"summary": summary_table(curves)}
    first = {p.name: p.read_bytes() for p in emit_report(curves, tables, tmp_path / "1")}
    second = {p.name: p.read_bytes() for p in emit_report(curves, tables, tmp_path / "2")}
    assert first == second


def test_svg_is_well_formed():
    root = ET.fromstring(curves_svg({"a<b": _curve(50, 20), "c": _curve(3, 0)}, title="x & y"))
    assert root.tag.endswith("svg")
