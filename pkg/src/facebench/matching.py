"""Associate submitted boxes with ground-truth faces and split their scores.

Every image is matched on its own. Ground-truth faces are visited in
descending order of their best overlap; each face claims its highest-overlap
unclaimed record with modified Jaccard >= 0.5. Ties are broken by the higher
score and then by a canonical record order (box, candidates, file position),
so shuffling the submission never changes the outcome.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .geometry import BoundingBox, boxes_to_array, modified_jaccard_matrix
from .protocol import UNKNOWN, Category, ProtocolManifest, check_label

OVERLAP_THRESHOLD = 0.5
MAX_CANDIDATES = 10


@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    box: BoundingBox
    confidence: float
    line: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        conf = float(self.confidence)
        if not math.isfinite(conf):
            raise ValidationError(f"confidence must be finite, got {self.confidence!r}")
        object.__setattr__(self, "confidence", conf)

    @property
    def score(self) -> float:
        return self.confidence

    def sort_key(self) -> tuple:
        return (-self.confidence, self.box.as_tuple())


@dataclass(frozen=True)
class RecognitionRecord:
    """A box with up to ten ``(label, score)`` candidates, best first."""

    image_id: str
    box: BoundingBox
    candidates: tuple[tuple[int, float], ...]
    line: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        cands = tuple((check_label(label), float(score)) for label, score in self.candidates)
        if not 1 <= len(cands) <= MAX_CANDIDATES:
            raise ValidationError(
                f"expected 1..{MAX_CANDIDATES} candidates, got {len(cands)}"
            )
        labels = [label for label, _ in cands]
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate candidate label in {labels}")
        for _, score in cands:
            if not math.isfinite(score):
                raise ValidationError(f"candidate score must be finite, got {score!r}")
        if any(cands[i][1] < cands[i + 1][1] for i in range(len(cands) - 1)):
            raise ValidationError("candidates must be sorted by descending score")
        object.__setattr__(self, "candidates", cands)

    @property
    def top_label(self) -> int:
        return self.candidates[0][0]

    @property
    def score(self) -> float:
        return self.candidates[0][1]

    def sort_key(self) -> tuple:
        return (-self.score, self.box.as_tuple(), self.candidates)


class NegativeTag(str, enum.Enum):
    MASKED_IN_TRAINING = "MaskedInTraining"
    MASKED_NOT_IN_TRAINING = "MaskedNotInTraining"
    FALSE_ACCEPT = "FalseAccept"
    PLAIN_UNKNOWN = "PlainUnknown"


_TAG_FOR_CATEGORY = {
    Category.UNKNOWN: NegativeTag.PLAIN_UNKNOWN,
    Category.MASKED_IN_TRAINING: NegativeTag.MASKED_IN_TRAINING,
    Category.MASKED_NOT_IN_TRAINING: NegativeTag.MASKED_NOT_IN_TRAINING,
}


@dataclass(frozen=True)
class ScorePartition:
    """Positive and negative score multisets for one submission.

    ``positives`` is sorted ascending and ``positive_faces`` holds the
    manifest index of the face each positive came from, in the same order.
    ``diagnostics`` counts where every record ended up.
    """

    positives: tuple[float, ...]
    positive_faces: tuple[int, ...]
    tagged_negatives: Mapping[NegativeTag, tuple[float, ...]]
    denominator: int
    diagnostics: Mapping[str, int] = field(default_factory=dict, compare=False)

    @property
    def negatives(self) -> tuple[float, ...]:
        return tuple(sorted(s for scores in self.tagged_negatives.values() for s in scores))

    def restrict(self, faces: set[int] | frozenset[int], denominator: int) -> ScorePartition:
        """Keep only positives from ``faces``; negatives are shared unchanged."""
        pairs = [(s, f) for s, f in zip(self.positives, self.positive_faces) if f in faces]
        return ScorePartition(
            positives=tuple(s for s, _ in pairs),
            positive_faces=tuple(f for _, f in pairs),
            tagged_negatives=self.tagged_negatives,
            denominator=denominator,
            diagnostics=self.diagnostics,
        )


@dataclass
class _ImageResult:
    positives: list[tuple[float, int]]
    negatives: list[tuple[NegativeTag, float]]
    counts: dict[str, int]


def assign_best_matches(overlaps: np.ndarray, record_rank: Sequence[int]) -> dict[int, int]:
    """Greedy one-to-one assignment on a ``faces x records`` overlap matrix.

    ``record_rank[j]`` is the canonical position of record ``j`` (lower wins a
    tie). Returns ``{face row: record column}`` for pairs with overlap >= 0.5.
    """
    n_faces, n_records = overlaps.shape
    if n_faces == 0 or n_records == 0:
        return {}
    rank = np.asarray(record_rank)
    eligible = overlaps >= OVERLAP_THRESHOLD
    masked = np.where(eligible, overlaps, -1.0)
    best = masked.max(axis=1)
    order_keys = []
    for i in range(n_faces):
        if best[i] < OVERLAP_THRESHOLD:
            continue
        cols = np.flatnonzero(masked[i] == best[i])
        order_keys.append((-best[i], int(rank[cols].min()), i))
    order_keys.sort()

    claimed = np.zeros(n_records, dtype=bool)
    result: dict[int, int] = {}
    for _, _, i in order_keys:
        row = np.where(eligible[i] & ~claimed, masked[i], -1.0)
        top = row.max()
        if top < OVERLAP_THRESHOLD:
            continue
        cols = np.flatnonzero(row == top)
        j = int(cols[np.argmin(rank[cols])])
        claimed[j] = True
        result[i] = j
    return result


def _canonical_rank(records: Sequence) -> list[int]:
    order = sorted(range(len(records)), key=lambda j: (records[j].sort_key(), j))
    rank = [0] * len(records)
    for pos, j in enumerate(order):
        rank[j] = pos
    return rank


def _match_image(face_idx, faces, records) -> tuple[dict[int, int], np.ndarray]:
    gt = boxes_to_array(f.box for f in faces)
    det = boxes_to_array(r.box for r in records)
    overlaps = modified_jaccard_matrix(gt, det)
    return assign_best_matches(overlaps, _canonical_rank(records)), overlaps


def _detect_image(face_idx, faces, records) -> _ImageResult:
    assignment, overlaps = _match_image(face_idx, faces, records)
    claimed = set(assignment.values())
    positives = [(records[j].confidence, face_idx[i]) for i, j in assignment.items()]
    negatives = []
    duplicates = 0
    for j, r in enumerate(records):
        if j in claimed:
            continue
        if overlaps.shape[0] and (overlaps[:, j] >= OVERLAP_THRESHOLD).any():
            duplicates += 1
        else:
            negatives.append((NegativeTag.FALSE_ACCEPT, r.confidence))
    counts = {
        "records": len(records),
        "positives": len(positives),
        "negatives": len(negatives),
        "duplicates": duplicates,
    }
    return _ImageResult(positives, negatives, counts)


def _recognize_image(face_idx, faces, records) -> _ImageResult:
    assignment, overlaps = _match_image(face_idx, faces, records)
    claimed = set(assignment.values())
    positives = []
    negatives = []
    counts = dict.fromkeys(
        ("records", "positives", "negatives", "duplicates", "wrong_identity",
         "false_rejections", "correct_rejections"),
        0,
    )
    counts["records"] = len(records)
    for i, j in assignment.items():
        face, rec = faces[i], records[j]
        if face.category is Category.KNOWN:
            if rec.top_label == face.label:
                positives.append((rec.score, face_idx[i]))
            elif rec.top_label == UNKNOWN:
                counts["false_rejections"] += 1
            else:
                counts["wrong_identity"] += 1
        elif rec.top_label != UNKNOWN:
            negatives.append((_TAG_FOR_CATEGORY[face.category], rec.score))
        else:
            counts["correct_rejections"] += 1
    for j, rec in enumerate(records):
        if j in claimed:
            continue
        if overlaps.shape[0] and (overlaps[:, j] >= OVERLAP_THRESHOLD).any():
            counts["duplicates"] += 1
        elif rec.top_label != UNKNOWN:
            negatives.append((NegativeTag.FALSE_ACCEPT, rec.score))
        else:
            counts["correct_rejections"] += 1
    counts["positives"] = len(positives)
    counts["negatives"] = len(negatives)
    return _ImageResult(positives, negatives, counts)


def _run_chunk(fn: Callable, jobs: list) -> list[_ImageResult]:
    return [fn(*job) for job in jobs]


def _partition(
    manifest: ProtocolManifest,
    records: Sequence,
    image_fn: Callable,
    denominator: int,
    workers: int,
) -> ScorePartition:
    known_images = manifest.image_days
    per_image: dict[str, list] = {}
    for r in records:
        if r.image_id not in known_images:
            where = f" (line {r.line})" if r.line is not None else ""
            raise ValidationError(f"record{where} references unknown image {r.image_id!r}")
        per_image.setdefault(r.image_id, []).append(r)

    groups = manifest.by_image()
    jobs = []
    for image_id in sorted(per_image):
        idx = groups.get(image_id, [])
        jobs.append((idx, [manifest.annotations[i] for i in idx], per_image[image_id]))

    if workers > 1 and len(jobs) > 1:
        n_chunks = min(len(jobs), workers * 4)
        chunks = [jobs[k::n_chunks] for k in range(n_chunks)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk_results = list(pool.map(_run_chunk, [image_fn] * n_chunks, chunks))
        results = [None] * len(jobs)
        for k, chunk in enumerate(chunk_results):
            results[k::n_chunks] = chunk
    else:
        results = _run_chunk(image_fn, jobs)

    positives: list[tuple[float, int]] = []
    tagged: dict[NegativeTag, list[float]] = {}
    totals: dict[str, int] = {}
    for res in results:
        positives.extend(res.positives)
        for tag, score in res.negatives:
            tagged.setdefault(tag, []).append(score)
        for key, value in res.counts.items():
            totals[key] = totals.get(key, 0) + value
    positives.sort()
    return ScorePartition(
        positives=tuple(s for s, _ in positives),
        positive_faces=tuple(f for _, f in positives),
        tagged_negatives={tag: tuple(sorted(tagged[tag])) for tag in NegativeTag if tag in tagged},
        denominator=denominator,
        diagnostics=totals,
    )


def partition_detection_scores(
    manifest: ProtocolManifest, detections: Sequence[DetectionRecord], workers: int = 1
) -> ScorePartition:
    """Split detection confidences into detected faces and false accepts.

    Duplicates (a second box on an already-claimed face) are discarded. The
    denominator is the number of labeled faces.
    """
    return _partition(manifest, detections, _detect_image, manifest.M, workers)


def partition_recognition_scores(
    manifest: ProtocolManifest, records: Sequence[RecognitionRecord], workers: int = 1
) -> ScorePartition:
    """Split rank-1 similarity scores into correct and false identifications.

    Positives are correct rank-1 labels on known faces. Negatives are any
    non -1 rank-1 label on an unknown or masked face, or on a box that
    overlaps no face; they are tagged by source. The denominator is the
    number of known faces.
    """
    return _partition(manifest, records, _recognize_image, manifest.N, workers)


def match_records(manifest: ProtocolManifest, records: Sequence) -> dict[int, int]:
    """Map manifest face index to the index (in ``records``) of its best match."""
    per_image: dict[str, list[int]] = {}
    for j, r in enumerate(records):
        per_image.setdefault(r.image_id, []).append(j)
    groups = manifest.by_image()
    out: dict[int, int] = {}
    for image_id in sorted(per_image):
        idx = groups.get(image_id, [])
        if not idx:
            continue
        cols = per_image[image_id]
        assignment, _ = _match_image(
            idx, [manifest.annotations[i] for i in idx], [records[j] for j in cols]
        )
        for i, j in assignment.items():
            out[idx[i]] = cols[j]
    return out
