"""Threshold calibration and FROC / DIR / CRR curve construction.

Budgets are absolute counts of false accepts (detection) or false
identifications (recognition). For a budget ``b`` the threshold is the
smallest observed score ``t`` such that fewer than ``b`` negatives score
``>= t``; ``+inf`` when no observed score qualifies.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .matching import NegativeTag, ScorePartition

DEFAULT_BUDGETS = (10, 100, 1000, 10000, 100000)


class CurveKind(str, enum.Enum):
    FROC = "FROC"
    DIR = "DIR"
    CRR = "CRR"


@dataclass(frozen=True)
class OperatingPoint:
    budget: int
    threshold: float
    rate: float | None
    positive_count: int
    negative_count: int
    saturated: bool


@dataclass(frozen=True)
class Curve:
    kind: CurveKind
    points: tuple[OperatingPoint, ...]
    denominator: int

    @property
    def budgets(self) -> tuple[int, ...]:
        return tuple(p.budget for p in self.points)


def log_budget_grid(start: float, stop: float, count: int) -> list[int]:
    """Roughly log-spaced integer budgets, deduplicated after rounding."""
    if start < 1 or stop < start or count < 1:
        raise InvalidArgumentError(f"bad grid {start}:{stop}:{count}")
    values = np.rint(np.geomspace(start, stop, count)).astype(np.int64)
    return sorted(set(int(v) for v in values))


def _check_budget(budget: int) -> None:
    if budget < 1:
        raise InvalidArgumentError(f"budget must be >= 1, got {budget}")


def calibrate_threshold(
    negatives: Iterable[float], budget: int, candidate_values: Iterable[float]
) -> float:
    _check_budget(budget)
    cands = np.unique(np.asarray(list(candidate_values), dtype=np.float64))
    neg = np.sort(np.asarray(list(negatives), dtype=np.float64))[::-1]
    return _threshold(neg, budget, cands)


def _threshold(neg_desc: np.ndarray, budget: int, cands: np.ndarray) -> float:
    # Fewer than `budget` negatives reach t  <=>  t > the budget-th largest negative.
    if len(neg_desc) < budget:
        return float(cands[0]) if len(cands) else math.inf
    idx = np.searchsorted(cands, neg_desc[budget - 1], side="right")
    return float(cands[idx]) if idx < len(cands) else math.inf


def _count_at_least(sorted_asc: np.ndarray, threshold: float) -> int:
    return int(len(sorted_asc) - np.searchsorted(sorted_asc, threshold, side="left"))


def _rate(positives: Iterable[float], threshold: float, denominator: int) -> float:
    if denominator < 1:
        raise InvalidArgumentError(f"denominator must be >= 1, got {denominator}")
    pos = np.sort(np.asarray(list(positives), dtype=np.float64))
    return _count_at_least(pos, threshold) / denominator


def detection_rate(positives: Iterable[float], threshold: float, M: int) -> float:
    return _rate(positives, threshold, M)


def identification_rate(positives: Iterable[float], threshold: float, N: int) -> float:
    return _rate(positives, threshold, N)


def build_curve(
    partition: ScorePartition,
    budgets: Sequence[int],
    kind: CurveKind | str,
    candidate_values: Iterable[float] | None = None,
) -> Curve:
    """One operating point per budget.

    ``candidate_values`` defaults to every positive and negative score. A
    point is saturated when the submission has fewer negatives than the
    budget; it then reports every positive. A zero denominator yields
    ``rate=None`` rather than an error.
    """
    kind = CurveKind(kind)
    budgets = list(budgets)
    if not budgets:
        raise InvalidArgumentError("at least one budget is required")
    for b in budgets:
        _check_budget(b)
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise InvalidArgumentError(f"budgets must be strictly increasing: {budgets}")

    pos = np.sort(np.asarray(partition.positives, dtype=np.float64))
    neg = np.sort(np.asarray(partition.negatives, dtype=np.float64))
    if candidate_values is None:
        cands = np.unique(np.concatenate([pos, neg]))
    else:
        cands = np.unique(np.asarray(list(candidate_values), dtype=np.float64))
    neg_desc = neg[::-1]

    points = []
    for b in budgets:
        t = _threshold(neg_desc, b, cands)
        count = _count_at_least(pos, t)
        points.append(
            OperatingPoint(
                budget=b,
                threshold=t,
                rate=count / partition.denominator if partition.denominator else None,
                positive_count=count,
                negative_count=_count_at_least(neg, t),
                saturated=len(neg) < b,
            )
        )
    return Curve(kind, tuple(points), partition.denominator)


def correct_rejection_curve(
    partition: ScorePartition, subset_tag: NegativeTag | str, grid: Sequence[int]
) -> Curve:
    """Fraction of one tagged negative subset scoring strictly below the threshold.

    For each ``k`` in ``grid`` the threshold is the ``k``-th largest positive
    score, i.e. the point where ``k`` faces are correctly identified. ``k``
    beyond the number of positives is clamped to the smallest positive and
    flagged saturated.
    """
    tag = NegativeTag(subset_tag)
    subset = np.sort(np.asarray(partition.tagged_negatives.get(tag, ()), dtype=np.float64))
    if len(subset) == 0:
        raise InvalidArgumentError(f"no negatives tagged {tag.value}")
    if not grid:
        raise InvalidArgumentError("at least one grid value is required")
    pos = np.sort(np.asarray(partition.positives, dtype=np.float64))
    pos_desc = pos[::-1]
    points = []
    for k in grid:
        _check_budget(k)
        saturated = k > len(pos_desc)
        if len(pos_desc) == 0:
            t = math.inf
        else:
            t = float(pos_desc[min(k, len(pos_desc)) - 1])
        below = int(np.searchsorted(subset, t, side="left"))
        points.append(
            OperatingPoint(
                budget=int(k),
                threshold=t,
                rate=below / len(subset),
                positive_count=_count_at_least(pos, t),
                negative_count=len(subset) - below,
                saturated=saturated,
            )
        )
    return Curve(CurveKind.CRR, tuple(points), len(subset))


def correct_rejection_rate(subset: Iterable[float], threshold: float) -> float:
    values = np.asarray(list(subset), dtype=np.float64)
    if len(values) == 0:
        raise InvalidArgumentError("empty subset")
    return float(np.count_nonzero(values < threshold)) / len(values)


@dataclass(frozen=True)
class SummaryCell:
    count: int
    saturated: bool
    best: bool = False


@dataclass(frozen=True)
class SummaryTable:
    """Absolute positive counts per budget (rows) and participant (columns)."""

    budgets: tuple[int, ...]
    participants: tuple[str, ...]
    cells: tuple[tuple[SummaryCell, ...], ...]

    def rows(self) -> list[list[str]]:
        out = [["budget", *self.participants]]
        for b, row in zip(self.budgets, self.cells):
            out.append([str(b)] + [f"{c.count}{'*' if c.saturated else ''}" for c in row])
        return out


def summary_table(curves: Mapping[str, Curve], highlight_best: bool = True) -> SummaryTable:
    if not curves:
        raise InvalidArgumentError("no curves to summarize")
    names = list(curves)
    budgets = curves[names[0]].budgets
    for name in names[1:]:
        if curves[name].budgets != budgets:
            raise InvalidArgumentError(
                f"curve {name!r} has budgets {curves[name].budgets}, expected {budgets}"
            )
    rows = []
    for i in range(len(budgets)):
        points = [curves[n].points[i] for n in names]
        top = max(p.positive_count for p in points)
        rows.append(
            tuple(
                SummaryCell(p.positive_count, p.saturated, highlight_best and p.positive_count == top)
                for p in points
            )
        )
    return SummaryTable(tuple(budgets), tuple(names), tuple(rows))
