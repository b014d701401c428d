"""Ground-truth clean-up by agreement of several detectors and recognizers.

Missing faces are added where at least ``min_detectors`` detectors, each
above a threshold calibrated on the validation split, report overlapping
boxes. Unknown faces receive an identity when every recognizer puts the
same known label at rank 1.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .curves import calibrate_threshold
from .errors import InvalidArgumentError, ValidationError
from .geometry import BoundingBox, iou
from .io import format_number
from .matching import (
    DetectionRecord,
    RecognitionRecord,
    match_records,
    partition_detection_scores,
)
from .protocol import UNKNOWN, Category, FaceAnnotation, ProtocolManifest

log = logging.getLogger(__name__)

DUPLICATE_IOU = 0.5


@dataclass(frozen=True)
class ConsensusConfig:
    min_detectors: int = 3
    overlap_threshold: float = 0.25
    calibration_budget: int = 2500
    upscale_factor: float = 1.2
    min_agreeing_recognizers: int = 3
    fusion: str = "xywh"

    def __post_init__(self) -> None:
        if self.min_detectors < 2:
            raise InvalidArgumentError("min_detectors must be >= 2")
        if not 0 < self.overlap_threshold <= 1:
            raise InvalidArgumentError("overlap_threshold must be in (0, 1]")
        if self.upscale_factor < 1:
            raise InvalidArgumentError("upscale_factor must be >= 1")
        if self.calibration_budget < 1:
            raise InvalidArgumentError("calibration_budget must be >= 1")
        if self.min_agreeing_recognizers < 1:
            raise InvalidArgumentError("min_agreeing_recognizers must be >= 1")
        if self.fusion not in ("xywh", "corners"):
            raise InvalidArgumentError(f"unknown fusion mode {self.fusion!r}")


@dataclass(frozen=True)
class ClusterMember:
    detector: str
    record: DetectionRecord
    weight: float


@dataclass(frozen=True)
class ConsensusCluster:
    image_id: str
    members: tuple[ClusterMember, ...]

    @property
    def detectors(self) -> frozenset[str]:
        return frozenset(m.detector for m in self.members)


@dataclass(frozen=True)
class Assignment:
    image_id: str
    box: BoundingBox
    label: int
    evidence: tuple[tuple[str, int, float], ...] = ()


@dataclass
class ConsensusResult:
    manifest: ProtocolManifest
    audit: list[str]
    thresholds: dict[str, float]
    clusters: list[ConsensusCluster] = field(default_factory=list)
    assignments: list[Assignment] = field(default_factory=list)


def _fmt_box(box: BoundingBox) -> str:
    return ",".join(format_number(v) for v in box.as_tuple())


def calibrate_detectors(
    validation: ProtocolManifest,
    submissions: Mapping[str, Sequence[DetectionRecord] | None],
    budget: int,
    required: Sequence[str] | None = None,
) -> dict[str, float]:
    """Per-detector confidence threshold at ``budget`` false accepts on validation."""
    for name in required or ():
        if submissions.get(name) is None:
            raise ValidationError(f"detector {name!r} has no validation submission")
    thresholds = {}
    for name in sorted(submissions):
        records = submissions[name]
        if records is None:
            raise ValidationError(f"detector {name!r} has no validation submission")
        part = partition_detection_scores(validation, records)
        thresholds[name] = calibrate_threshold(
            part.negatives, budget, part.positives + part.negatives
        )
    return thresholds


def normalize_confidences(records: Sequence[DetectionRecord]) -> list[float]:
    """Min-max scale confidences to [0, 1]; constant input maps to all ones."""
    if not records:
        return []
    confs = [r.confidence for r in records]
    lo, hi = min(confs), max(confs)
    if hi == lo:
        return [1.0] * len(confs)
    return [(c - lo) / (hi - lo) for c in confs]


def cluster_detections(
    image_detections: Mapping[str, Sequence[DetectionRecord]],
    config: ConsensusConfig,
    weights: Mapping[str, Sequence[float]] | None = None,
) -> list[ConsensusCluster]:
    """Single-link clusters over cross-detector IOU, one box per detector each.

    Boxes join in order of decreasing weight, so when a detector has two
    candidates for one cluster the stronger one wins. Clusters with fewer
    than ``config.min_detectors`` detectors are dropped.
    """
    if weights is None:
        weights = {d: normalize_confidences(recs) for d, recs in image_detections.items()}
    items: list[ClusterMember] = []
    for det in sorted(image_detections):
        for rec, w in zip(image_detections[det], weights[det]):
            items.append(ClusterMember(det, rec, w))
    items.sort(key=lambda m: (-m.weight, m.detector, m.record.box.as_tuple(), -m.record.confidence))

    # Each cluster: (creation order, members)
    clusters: list[tuple[int, list[ClusterMember]]] = []
    created = 0
    for item in items:
        links = []
        for ci, (order, members) in enumerate(clusters):
            if any(m.detector == item.detector for m in members):
                continue
            best = max(iou(item.record.box, m.record.box) for m in members)
            if best >= config.overlap_threshold:
                links.append((-best, order, ci))
        if not links:
            clusters.append((created, [item]))
            created += 1
            continue
        links.sort()
        merged = [item]
        used = {item.detector}
        absorbed = []
        for _, order, ci in links:
            dets = {m.detector for m in clusters[ci][1]}
            if dets & used:
                continue
            merged.extend(clusters[ci][1])
            used |= dets
            absorbed.append(ci)
        first = min(clusters[ci][0] for ci in absorbed)
        clusters = [c for ci, c in enumerate(clusters) if ci not in absorbed]
        clusters.append((first, merged))
        clusters.sort(key=lambda c: c[0])

    out = []
    for _, members in clusters:
        if len({m.detector for m in members}) < config.min_detectors:
            continue
        members = sorted(members, key=lambda m: (m.detector, m.record.box.as_tuple()))
        out.append(ConsensusCluster(members[0].record.image_id, tuple(members)))
    return out


def fuse_cluster(cluster: ConsensusCluster, config: ConsensusConfig, day_id: str = "") -> FaceAnnotation:
    """Weighted mean of member boxes, scaled about its center; labeled unknown."""
    weights = [m.weight for m in cluster.members]
    total = sum(weights)
    if total <= 0:
        log.warning("cluster on %s has zero total weight; using plain mean", cluster.image_id)
        weights = [1.0] * len(cluster.members)
        total = float(len(weights))
    boxes = [m.record.box for m in cluster.members]
    if config.fusion == "corners":
        x1 = sum(w * b.x for w, b in zip(weights, boxes)) / total
        y1 = sum(w * b.y for w, b in zip(weights, boxes)) / total
        x2 = sum(w * b.right for w, b in zip(weights, boxes)) / total
        y2 = sum(w * b.bottom for w, b in zip(weights, boxes)) / total
        fused = BoundingBox(x1, y1, x2 - x1, y2 - y1)
    else:
        fused = BoundingBox(
            *(sum(w * b.as_tuple()[k] for w, b in zip(weights, boxes)) / total for k in range(4))
        )
    return FaceAnnotation(
        cluster.image_id, fused.scaled(config.upscale_factor), UNKNOWN, Category.UNKNOWN, day_id
    )


def add_faces(
    manifest: ProtocolManifest, new_faces: Sequence[FaceAnnotation]
) -> tuple[ProtocolManifest, list[str]]:
    """Append new unknown faces, skipping any with IOU >= 0.5 to a face already there."""
    audit = []
    annotations = list(manifest.annotations)
    per_image: dict[str, list[BoundingBox]] = defaultdict(list)
    for a in annotations:
        per_image[a.image_id].append(a.box)
    for face in sorted(new_faces, key=lambda f: (f.image_id, f.box.as_tuple())):
        clash = max((iou(face.box, b) for b in per_image[face.image_id]), default=0.0)
        if clash >= DUPLICATE_IOU:
            audit.append(
                f"SKIP image={face.image_id} box={_fmt_box(face.box)} "
                f"reason=duplicate iou={format_number(clash)}"
            )
            continue
        day = manifest.image_days.get(face.image_id, face.day_id)
        face = replace(face, day_id=day)
        annotations.append(face)
        per_image[face.image_id].append(face.box)
        audit.append(f"ADD image={face.image_id} box={_fmt_box(face.box)} label=-1")
    return manifest.with_annotations(annotations), audit


def assign_identities(
    manifest: ProtocolManifest,
    recognitions: Mapping[str, Sequence[RecognitionRecord]],
    config: ConsensusConfig,
) -> tuple[list[Assignment], list[str]]:
    """Propose a known label for each unknown face all recognizers agree on.

    Every supplied recognizer must have a matched record whose rank-1 label
    is the same positive id. Masked faces are never proposed.
    """
    if len(recognitions) < config.min_agreeing_recognizers:
        raise InvalidArgumentError(
            f"need {config.min_agreeing_recognizers} recognizers, got {len(recognitions)}"
        )
    names = sorted(recognitions)
    matches = {n: match_records(manifest, recognitions[n]) for n in names}
    assignments, audit = [], []
    for i, face in enumerate(manifest.annotations):
        if face.category is Category.KNOWN:
            continue
        evidence = []
        for n in names:
            j = matches[n].get(i)
            if j is None:
                break
            rec = recognitions[n][j]
            evidence.append((n, rec.top_label, rec.score))
        else:
            labels = {label for _, label, _ in evidence}
            if len(labels) != 1:
                continue
            (label,) = labels
            if label == UNKNOWN:
                continue
            ev = " ".join(f"{n}:{lab}@{format_number(s)}" for n, lab, s in evidence)
            if face.category.is_masked:
                audit.append(
                    f"SKIP-MASKED image={face.image_id} box={_fmt_box(face.box)} "
                    f"label={label} evidence={ev}"
                )
                continue
            assignments.append(Assignment(face.image_id, face.box, label, tuple(evidence)))
    return assignments, audit


def apply_assignments(
    manifest: ProtocolManifest, assignments: Sequence[Assignment]
) -> tuple[ProtocolManifest, list[str]]:
    index = {a.key: i for i, a in enumerate(manifest.annotations)}
    annotations = list(manifest.annotations)
    audit = []
    for asg in sorted(assignments, key=lambda a: (a.image_id, a.box.as_tuple())):
        where = f"image={asg.image_id} box={_fmt_box(asg.box)}"
        i = index.get((asg.image_id, asg.box))
        if i is None:
            audit.append(f"REJECT {where} label={asg.label} reason=no-such-face")
            continue
        face = annotations[i]
        if face.category.is_masked:
            audit.append(f"REJECT {where} label={asg.label} reason=masked")
            continue
        if face.category is not Category.UNKNOWN or asg.label < 1:
            audit.append(f"REJECT {where} label={asg.label} reason=not-assignable")
            continue
        annotations[i] = replace(face, label=asg.label, category=Category.KNOWN)
        ev = " ".join(f"{n}:{lab}@{format_number(s)}" for n, lab, s in asg.evidence)
        audit.append(f"ASSIGN {where} label={asg.label} evidence={ev}".rstrip())
    return manifest.with_annotations(annotations), audit


def augment_manifest(
    manifest: ProtocolManifest,
    new_faces: Sequence[FaceAnnotation],
    assignments: Sequence[Assignment],
) -> tuple[ProtocolManifest, list[str]]:
    """Add ``new_faces`` then apply ``assignments`` (keyed by image and box)."""
    added, audit_add = add_faces(manifest, new_faces)
    updated, audit_assign = apply_assignments(added, assignments)
    return updated, audit_add + audit_assign


def run_consensus(
    test: ProtocolManifest,
    validation: ProtocolManifest,
    test_detections: Mapping[str, Sequence[DetectionRecord]],
    validation_detections: Mapping[str, Sequence[DetectionRecord]],
    recognitions: Mapping[str, Sequence[RecognitionRecord]],
    config: ConsensusConfig = ConsensusConfig(),
) -> ConsensusResult:
    if len(test_detections) < config.min_detectors:
        raise InvalidArgumentError(
            f"need at least {config.min_detectors} detectors, got {len(test_detections)}"
        )
    thresholds = calibrate_detectors(
        validation,
        {n: validation_detections.get(n) for n in test_detections},
        config.calibration_budget,
    )
    audit = [
        f"THRESHOLD detector={n} value={format_number(t)}" for n, t in sorted(thresholds.items())
    ]

    per_image: dict[str, dict[str, list[DetectionRecord]]] = defaultdict(dict)
    per_image_w: dict[str, dict[str, list[float]]] = defaultdict(dict)
    for name in sorted(test_detections):
        kept = [r for r in test_detections[name] if r.confidence >= thresholds[name]]
        for rec, w in zip(kept, normalize_confidences(kept)):
            per_image[rec.image_id].setdefault(name, []).append(rec)
            per_image_w[rec.image_id].setdefault(name, []).append(w)

    clusters: list[ConsensusCluster] = []
    new_faces = []
    for image_id in sorted(per_image):
        for cluster in cluster_detections(per_image[image_id], config, per_image_w[image_id]):
            clusters.append(cluster)
            face = fuse_cluster(cluster, config, test.image_days.get(image_id, ""))
            new_faces.append(face)
            members = " ".join(
                f"{m.detector}:{format_number(m.record.confidence)}@{_fmt_box(m.record.box)}"
                for m in cluster.members
            )
            audit.append(f"CLUSTER image={image_id} fused={_fmt_box(face.box)} members={members}")

    added, add_audit = add_faces(test, new_faces)
    assignments, assign_audit = assign_identities(added, recognitions, config)
    final, apply_audit = apply_assignments(added, assignments)
    audit += add_audit + assign_audit + apply_audit
    return ConsensusResult(final, audit, thresholds, clusters, assignments)
