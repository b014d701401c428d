"""Brute-force reference implementations.

Nothing here imports overlap, matching or threshold code from the
production modules: boxes are read as plain tuples, every record/face pair
is scored, and every observed score is tried as a threshold.
"""

from __future__ import annotations

import math

import numpy as np

from ..curves import Curve, CurveKind, OperatingPoint
from ..errors import InvalidArgumentError
from ..matching import NegativeTag, ScorePartition
from ..protocol import Category, ProtocolManifest


def _corners(box) -> tuple[float, float, float, float, float]:
    x, y, w, h = box.x, box.y, box.width, box.height
    return x, y, x + w, y + h, w * h


def oracle_jaccard(gt, det) -> float:
    gx1, gy1, gx2, gy2, g_area = _corners(gt)
    dx1, dy1, dx2, dy2, d_area = _corners(det)
    iw = min(gx2, dx2) - max(gx1, dx1)
    ih = min(gy2, dy2) - max(gy1, dy1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (max(g_area / 4, inter) + d_area - inter)


def oracle_iou(a, b) -> float:
    ax1, ay1, ax2, ay2, a_area = _corners(a)
    bx1, by1, bx2, by2, b_area = _corners(b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a_area + b_area - inter)


def _record_score(rec) -> float:
    if hasattr(rec, "confidence"):
        return rec.confidence
    return rec.candidates[0][1]


def _tie_key(rec, position: int) -> tuple:
    box = (rec.box.x, rec.box.y, rec.box.width, rec.box.height)
    extra = (rec.candidates,) if hasattr(rec, "candidates") else ()
    return (-_record_score(rec), box, *extra, position)


_TAGS = {
    Category.UNKNOWN: NegativeTag.PLAIN_UNKNOWN,
    Category.MASKED_IN_TRAINING: NegativeTag.MASKED_IN_TRAINING,
    Category.MASKED_NOT_IN_TRAINING: NegativeTag.MASKED_NOT_IN_TRAINING,
}


def oracle_match(manifest: ProtocolManifest, records) -> ScorePartition:
    """Reference partition for detection or recognition records.

    The kind is inferred from the records (``confidence`` vs ``candidates``);
    an empty list is treated as detection.
    """
    recognition = bool(records) and hasattr(records[0], "candidates")
    positives: list[tuple[float, int]] = []
    tagged: dict[NegativeTag, list[float]] = {}

    images = sorted({r.image_id for r in records})
    for image_id in images:
        if image_id not in manifest.image_days:
            raise InvalidArgumentError(f"unknown image {image_id!r}")
        face_ids = [i for i, a in enumerate(manifest.annotations) if a.image_id == image_id]
        rec_ids = [j for j, r in enumerate(records) if r.image_id == image_id]
        J = {
            (i, j): oracle_jaccard(manifest.annotations[i].box, records[j].box)
            for i in face_ids
            for j in rec_ids
        }
        keys = {j: _tie_key(records[j], j) for j in rec_ids}

        order = []
        for i in face_ids:
            ok = [j for j in rec_ids if J[i, j] >= 0.5]
            if not ok:
                continue
            top = max(J[i, j] for j in ok)
            best = min(keys[j] for j in ok if J[i, j] == top)
            order.append(((-top, best, i), i))
        order.sort()

        claimed: dict[int, int] = {}
        for _, i in order:
            free = [j for j in rec_ids if J[i, j] >= 0.5 and j not in claimed]
            if not free:
                continue
            j = min(free, key=lambda j: (-J[i, j], keys[j]))
            claimed[j] = i

        for j in rec_ids:
            rec = records[j]
            score = _record_score(rec)
            if j in claimed:
                face = manifest.annotations[claimed[j]]
                if not recognition:
                    positives.append((score, claimed[j]))
                    continue
                top_label = rec.candidates[0][0]
                if face.category is Category.KNOWN:
                    if top_label == face.label:
                        positives.append((score, claimed[j]))
                elif top_label != -1:
                    tagged.setdefault(_TAGS[face.category], []).append(score)
                continue
            if any(J[i, j] >= 0.5 for i in face_ids):
                continue
            if recognition and rec.candidates[0][0] == -1:
                continue
            tagged.setdefault(NegativeTag.FALSE_ACCEPT, []).append(score)

    positives.sort()
    denominator = (
        sum(1 for a in manifest.annotations if a.category is Category.KNOWN)
        if recognition
        else len(manifest.annotations)
    )
    return ScorePartition(
        positives=tuple(s for s, _ in positives),
        positive_faces=tuple(f for _, f in positives),
        tagged_negatives={t: tuple(sorted(tagged[t])) for t in NegativeTag if t in tagged},
        denominator=denominator,
    )


def _count_at_least(values: np.ndarray, thresholds: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty(len(thresholds), dtype=np.int64)
    for start in range(0, len(thresholds), chunk):
        t = thresholds[start:start + chunk]
        out[start:start + chunk] = (values[None, :] >= t[:, None]).sum(axis=1)
    return out


def oracle_curve(partition: ScorePartition, budgets, kind=CurveKind.FROC, candidate_values=None) -> Curve:
    """Sweep every distinct observed score (and +inf) as a threshold."""
    budgets = list(budgets)
    if not budgets or any(b < 1 for b in budgets):
        raise InvalidArgumentError(f"invalid budgets {budgets}")
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise InvalidArgumentError(f"budgets must be strictly increasing: {budgets}")
    pos = np.asarray(partition.positives, dtype=np.float64)
    neg = np.asarray(
        [s for scores in partition.tagged_negatives.values() for s in scores], dtype=np.float64
    )
    if candidate_values is None:
        candidate_values = list(partition.positives) + list(neg)
    thresholds = np.array(sorted(set(float(c) for c in candidate_values)) + [math.inf])
    neg_counts = _count_at_least(neg, thresholds)
    pos_counts = _count_at_least(pos, thresholds)

    points = []
    for b in budgets:
        k = next(k for k in range(len(thresholds)) if neg_counts[k] < b)
        count = int(pos_counts[k])
        points.append(
            OperatingPoint(
                budget=b,
                threshold=float(thresholds[k]),
                rate=count / partition.denominator if partition.denominator else None,
                positive_count=count,
                negative_count=int(neg_counts[k]),
                saturated=len(neg) < b,
            )
        )
    return Curve(CurveKind(kind), tuple(points), partition.denominator)


def oracle_clusters(boxes: dict[str, object], threshold: float) -> list[set[str]]:
    """Connected components of the IOU >= threshold graph, one box per detector."""
    names = sorted(boxes)
    seen: set[str] = set()
    comps = []
    for start in names:
        if start in seen:
            continue
        comp, stack = set(), [start]
        while stack:
            n = stack.pop()
            if n in comp:
                continue
            comp.add(n)
            stack += [m for m in names if m not in comp and oracle_iou(boxes[n], boxes[m]) >= threshold]
        seen |= comp
        comps.append(comp)
    return comps
