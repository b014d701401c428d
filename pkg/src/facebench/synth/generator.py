"""Seeded synthetic challenges with full bookkeeping of every generated record.

All box coordinates are integers, so overlap arithmetic on them is exact in
double precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import InvalidArgumentError
from ..geometry import BoundingBox
from ..io import write_detections, write_manifest, write_manifest_json, write_recognitions
from ..matching import DetectionRecord, NegativeTag, RecognitionRecord, ScorePartition
from ..protocol import (
    UNKNOWN,
    Category,
    FaceAnnotation,
    ProtocolManifest,
    Split,
    training_days_from,
)

SPLITS = (Split.TRAIN, Split.VALIDATION, Split.TEST)


@dataclass(frozen=True)
class DetectorModel:
    name: str
    miss_rate: float = 0.1
    false_accepts_per_image: float = 1.0
    shrink: float = 0.0
    jitter: float = 0.0
    duplicate_rate: float = 0.0
    true_confidence: tuple[float, float] = (2.0, 1.0)
    false_confidence: tuple[float, float] = (0.0, 1.0)


@dataclass(frozen=True)
class RecognizerModel:
    name: str
    detector: DetectorModel
    rank1_accuracy: float = 0.8
    unknown_rejection: float = 0.5
    correct_score: tuple[float, float] = (0.8, 0.1)
    incorrect_score: tuple[float, float] = (0.5, 0.15)
    unknown_score: tuple[float, float] = (0.4, 0.1)
    candidates: int = 3


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    image_count: int = 20
    faces_per_image: tuple[int, int] = (0, 8)
    known: float = 0.4
    unknown: float = 0.4
    masked_in_training: float = 0.1
    masked_not_in_training: float = 0.1
    identities: int = 50
    masked_identities: int = 10
    days: int = 4
    different_day_rate: float = 0.3
    crowded: bool = False
    nested_rate: float = 0.2
    hidden_face_rate: float = 0.0
    face_size: tuple[int, int] = (40, 200)
    score_decimals: int | None = None
    splits: tuple[str, ...] = ("train", "validation", "test")
    detectors: tuple[DetectorModel, ...] = (DetectorModel("det"),)
    recognizers: tuple[RecognizerModel, ...] = (RecognizerModel("rec", DetectorModel("rec-det")),)

    def validate(self) -> None:
        if self.image_count < 1:
            raise InvalidArgumentError("image_count must be >= 1")
        lo, hi = self.faces_per_image
        if not 0 <= lo <= hi:
            raise InvalidArgumentError(f"bad faces_per_image {self.faces_per_image}")
        if not self.crowded and hi > _GRID_COLS * _GRID_ROWS:
            raise InvalidArgumentError(f"at most {_GRID_COLS * _GRID_ROWS} faces per image")
        probs = [self.known, self.unknown, self.masked_in_training, self.masked_not_in_training,
                 self.different_day_rate, self.nested_rate, self.hidden_face_rate]
        for model in self.detectors + tuple(r.detector for r in self.recognizers):
            probs += [model.miss_rate, model.duplicate_rate]
            if model.false_accepts_per_image < 0 or not 0 <= model.shrink <= 0.5:
                raise InvalidArgumentError(f"bad detector model {model.name}")
        for r in self.recognizers:
            probs += [r.rank1_accuracy, r.unknown_rejection]
            if not 1 <= r.candidates <= 10:
                raise InvalidArgumentError(f"recognizer {r.name} must emit 1..10 candidates")
        if any(not 0 <= p <= 1 for p in probs):
            raise InvalidArgumentError("probabilities must lie in [0, 1]")
        if self.known + self.unknown + self.masked_in_training + self.masked_not_in_training <= 0:
            raise InvalidArgumentError("category proportions must not all be zero")
        if self.identities < 1 or self.days < 1:
            raise InvalidArgumentError("need at least one identity and one day")
        if self.face_size[0] < 4 or self.face_size[1] > _CELL - 10:
            raise InvalidArgumentError(f"face sizes must lie in [4, {_CELL - 10}]")

    @property
    def is_clean(self) -> bool:
        """Every detection lies inside its face and covers >= 1/4 of it."""
        models = self.detectors + tuple(r.detector for r in self.recognizers)
        return not self.crowded and all(m.jitter == 0 for m in models)


@dataclass(frozen=True)
class RecordTruth:
    """What a generated record really is: a face hit or a false accept."""

    kind: str  # "face" | "false_accept"
    face: int | None = None  # index into the split's hidden-inclusive face list
    visible: bool = True  # face is in the published manifest


@dataclass
class Scenario:
    spec: ScenarioSpec
    manifests: dict[Split, ProtocolManifest]
    faces: dict[Split, list[FaceAnnotation]]
    visible_index: dict[Split, list[int | None]]
    detections: dict[Split, dict[str, list[DetectionRecord]]]
    detection_truth: dict[Split, dict[str, list[RecordTruth]]]
    recognitions: dict[Split, dict[str, list[RecognitionRecord]]]
    recognition_truth: dict[Split, dict[str, list[RecordTruth]]]


_CELL = 250
_GRID_COLS = 16
_GRID_ROWS = 10
_IMAGE_W = _CELL * _GRID_COLS
_FA_BAND_Y = _CELL * _GRID_ROWS + 50
_IMAGE_H = _FA_BAND_Y + 400
_CROWD_W, _CROWD_H = 900, 700


class _Gen:
    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)

    def normal(self, params: tuple[float, float]) -> float:
        value = float(self.rng.normal(params[0], params[1]))
        if self.spec.score_decimals is not None:
            value = round(value, self.spec.score_decimals)
        return value

    def int_between(self, lo: int, hi: int) -> int:
        return int(self.rng.integers(lo, hi + 1))

    def face_box(self) -> BoundingBox:
        lo, hi = self.spec.face_size
        return BoundingBox(0, 0, self.int_between(lo, hi), self.int_between(lo, hi))

    def layout(self, n: int) -> list[BoundingBox]:
        boxes: list[BoundingBox] = []
        if not self.spec.crowded:
            cells = self.rng.choice(_GRID_COLS * _GRID_ROWS, size=n, replace=False)
            for cell in sorted(int(c) for c in cells):
                size = self.face_box()
                cx, cy = (cell % _GRID_COLS) * _CELL, (cell // _GRID_COLS) * _CELL
                x = cx + self.int_between(0, _CELL - int(size.width) - 1)
                y = cy + self.int_between(0, _CELL - int(size.height) - 1)
                boxes.append(BoundingBox(x, y, size.width, size.height))
            return boxes
        seen = set()
        while len(boxes) < n:
            if boxes and self.rng.random() < self.spec.nested_rate:
                outer = boxes[int(self.rng.integers(len(boxes)))]
                w = max(4, int(outer.width * self.rng.uniform(0.3, 0.8)))
                h = max(4, int(outer.height * self.rng.uniform(0.3, 0.8)))
                x = int(outer.x) + self.int_between(0, int(outer.width) - w)
                y = int(outer.y) + self.int_between(0, int(outer.height) - h)
                box = BoundingBox(x, y, w, h)
            else:
                size = self.face_box()
                x = self.int_between(0, _CROWD_W - int(size.width))
                y = self.int_between(0, _CROWD_H - int(size.height))
                box = BoundingBox(x, y, size.width, size.height)
            if box.as_tuple() not in seen:
                seen.add(box.as_tuple())
                boxes.append(box)
        return boxes

    def detect_box(self, face: BoundingBox, model: DetectorModel) -> BoundingBox:
        w0, h0 = int(face.width), int(face.height)
        w = max(1, math.ceil(w0 * self.rng.uniform(1 - model.shrink, 1)))
        h = max(1, math.ceil(h0 * self.rng.uniform(1 - model.shrink, 1)))
        x = int(face.x) + self.int_between(0, w0 - w)
        y = int(face.y) + self.int_between(0, h0 - h)
        if model.jitter > 0:
            x += int(round(self.rng.normal(0, model.jitter * w0)))
            y += int(round(self.rng.normal(0, model.jitter * h0)))
            w = max(1, w + int(round(self.rng.normal(0, model.jitter * w0))))
            h = max(1, h + int(round(self.rng.normal(0, model.jitter * h0))))
        return BoundingBox(x, y, w, h)

    def false_box(self) -> BoundingBox:
        size = self.face_box()
        w, h = int(size.width), int(size.height)
        if self.spec.crowded:
            return BoundingBox(
                self.int_between(0, _CROWD_W - w), self.int_between(0, _CROWD_H - h), w, h
            )
        return BoundingBox(
            self.int_between(0, _IMAGE_W - w), self.int_between(_FA_BAND_Y, _IMAGE_H - h), w, h
        )


def _identity_pools(spec: ScenarioSpec):
    known = list(range(1, spec.identities + 1))
    n_mit = spec.masked_identities
    mit = list(range(spec.identities + 1, spec.identities + 1 + n_mit))
    mnt = list(range(spec.identities + 1 + n_mit, spec.identities + 1 + 2 * n_mit))
    return known, mit, mnt


def _category_probs(spec: ScenarioSpec, split: Split) -> np.ndarray:
    p = np.array([spec.known, spec.unknown, spec.masked_in_training,
                  0.0 if split is Split.TRAIN else spec.masked_not_in_training])
    return p / p.sum()


_CATS = (Category.KNOWN, Category.UNKNOWN, Category.MASKED_IN_TRAINING,
         Category.MASKED_NOT_IN_TRAINING)


def _pick_identity(g: _Gen, pool: list[int], home: dict[int, str], day: str, same_day: bool) -> int:
    matching = [i for i in pool if (home[i] == day) == same_day]
    choices = matching or pool
    return choices[int(g.rng.integers(len(choices)))]


def _recognize(
    g: _Gen, model: RecognizerModel, true_label: int | None, known_pool: list[int]
) -> tuple[tuple[int, float], ...]:
    """Candidate list for one box; ``true_label`` is None for non-gallery faces."""
    def other_label(exclude: set[int]) -> int:
        options = [k for k in known_pool if k not in exclude]
        return options[int(g.rng.integers(len(options)))] if options else UNKNOWN

    if true_label is not None:
        if g.rng.random() < model.rank1_accuracy:
            top, score = true_label, g.normal(model.correct_score)
        elif g.rng.random() < 0.5:
            top, score = UNKNOWN, g.normal(model.unknown_score)
        else:
            top, score = other_label({true_label}), g.normal(model.incorrect_score)
    elif g.rng.random() < model.unknown_rejection:
        top, score = UNKNOWN, g.normal(model.unknown_score)
    else:
        top, score = other_label(set()), g.normal(model.incorrect_score)

    cands = [(top, score)]
    used = {top}
    for _ in range(model.candidates - 1):
        if len(used) > len(known_pool):
            break
        label = UNKNOWN if UNKNOWN not in used and g.rng.random() < 0.2 else other_label(used)
        if label in used:
            break
        used.add(label)
        score = cands[-1][1] - abs(g.normal((0.0, 0.05)))
        cands.append((label, score))
    return tuple(cands)


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    spec.validate()
    g = _Gen(spec)
    known_pool, mit_pool, mnt_pool = _identity_pools(spec)
    day_names = [f"day{d:02d}" for d in range(spec.days)]
    home = {i: day_names[int(g.rng.integers(spec.days))]
            for i in known_pool + mit_pool + mnt_pool}

    manifests, faces_by_split, visible_by_split = {}, {}, {}
    detections, det_truth, recognitions, rec_truth = {}, {}, {}, {}
    train_manifest = None
    for split in (Split(s) for s in spec.splits):
        probs = _category_probs(spec, split)
        faces: list[FaceAnnotation] = []
        visible: list[bool] = []
        image_days: dict[str, str] = {}
        image_faces: dict[str, list[int]] = {}
        for n in range(spec.image_count):
            image_id = f"{split.value}_{n:05d}"
            day = day_names[int(g.rng.integers(spec.days))]
            image_days[image_id] = day
            count = g.int_between(*spec.faces_per_image)
            image_faces[image_id] = []
            for box in g.layout(count):
                cat = _CATS[int(g.rng.choice(4, p=probs))]
                same = split is Split.TRAIN or g.rng.random() >= spec.different_day_rate
                if cat is Category.KNOWN:
                    label = _pick_identity(g, known_pool, home, day, same)
                elif cat is Category.MASKED_IN_TRAINING:
                    label = _pick_identity(g, mit_pool, home, day, same) if mit_pool else UNKNOWN
                elif cat is Category.MASKED_NOT_IN_TRAINING:
                    label = _pick_identity(g, mnt_pool, home, day, same) if mnt_pool else UNKNOWN
                else:
                    label = UNKNOWN
                if label == UNKNOWN:
                    cat = Category.UNKNOWN
                image_faces[image_id].append(len(faces))
                faces.append(FaceAnnotation(image_id, box, label, cat, day))
                visible.append(g.rng.random() >= spec.hidden_face_rate)

        visible_index: list[int | None] = []
        shown = []
        for face, vis in zip(faces, visible):
            visible_index.append(len(shown) if vis else None)
            if vis:
                shown.append(face)
        manifest = ProtocolManifest(split, shown, image_days=image_days)
        if split is Split.TRAIN:
            train_manifest = manifest
            manifest = ProtocolManifest(
                split, shown, training_days=training_days_from(manifest), image_days=image_days
            )
        elif train_manifest is not None:
            manifest = ProtocolManifest(
                split, shown, training_days=training_days_from(train_manifest),
                image_days=image_days,
            )
        manifests[split] = manifest
        faces_by_split[split] = faces
        visible_by_split[split] = visible_index

        detections[split], det_truth[split] = {}, {}
        for model in spec.detectors:
            recs, truth = _run_detector(g, model, faces, visible, image_faces)
            detections[split][model.name] = recs
            det_truth[split][model.name] = truth

        recognitions[split], rec_truth[split] = {}, {}
        for rmodel in spec.recognizers:
            boxes, truth = _run_detector(g, rmodel.detector, faces, visible, image_faces)
            recs = []
            for det, t in zip(boxes, truth):
                true_label = None
                if t.kind == "face":
                    face = faces[t.face]
                    if face.category is Category.KNOWN:
                        true_label = face.label
                recs.append(RecognitionRecord(det.image_id, det.box,
                                              _recognize(g, rmodel, true_label, known_pool)))
            recognitions[split][rmodel.name] = recs
            rec_truth[split][rmodel.name] = truth

    return Scenario(spec, manifests, faces_by_split, visible_by_split,
                    detections, det_truth, recognitions, rec_truth)


def _run_detector(g: _Gen, model: DetectorModel, faces, visible, image_faces):
    recs: list[DetectionRecord] = []
    truth: list[RecordTruth] = []
    for image_id, idx in image_faces.items():
        for i in idx:
            if g.rng.random() < model.miss_rate:
                continue
            hits = 1 + int(g.rng.random() < model.duplicate_rate)
            for _ in range(hits):
                box = g.detect_box(faces[i].box, model)
                recs.append(DetectionRecord(image_id, box, g.normal(model.true_confidence)))
                truth.append(RecordTruth("face", i, visible[i]))
        for _ in range(int(g.rng.poisson(model.false_accepts_per_image))):
            recs.append(DetectionRecord(image_id, g.false_box(), g.normal(model.false_confidence)))
            truth.append(RecordTruth("false_accept"))
    return recs, truth


def bookkeeping_detection_partition(scenario: Scenario, split: Split, detector: str) -> ScorePartition:
    """Expected detection partition derived from generator truth alone.

    Only valid for clean scenarios, where each face's own detections are
    its only overlapping records.
    """
    if not scenario.spec.is_clean:
        raise InvalidArgumentError("bookkeeping partitions need a clean scenario")
    recs = scenario.detections[split][detector]
    truth = scenario.detection_truth[split][detector]
    vis = scenario.visible_index[split]
    best: dict[int, tuple] = {}
    negatives = []
    for rec, t in zip(recs, truth):
        if t.kind == "face" and t.visible:
            key = rec.sort_key()
            if t.face not in best or key < best[t.face][0]:
                best[t.face] = (key, rec.confidence)
        else:
            negatives.append(rec.confidence)
    positives = sorted((conf, vis[f]) for f, (_, conf) in best.items())
    manifest = scenario.manifests[split]
    return ScorePartition(
        positives=tuple(s for s, _ in positives),
        positive_faces=tuple(f for _, f in positives),
        tagged_negatives={NegativeTag.FALSE_ACCEPT: tuple(sorted(negatives))} if negatives else {},
        denominator=manifest.M,
    )


def bookkeeping_recognition_partition(
    scenario: Scenario, split: Split, recognizer: str
) -> ScorePartition:
    """Expected recognition partition from generator truth (clean scenarios only)."""
    if not scenario.spec.is_clean:
        raise InvalidArgumentError("bookkeeping partitions need a clean scenario")
    recs = scenario.recognitions[split][recognizer]
    truth = scenario.recognition_truth[split][recognizer]
    faces = scenario.faces[split]
    vis = scenario.visible_index[split]
    best: dict[int, tuple] = {}
    tagged: dict[NegativeTag, list[float]] = {}
    for rec, t in zip(recs, truth):
        if t.kind == "face" and t.visible:
            key = rec.sort_key()
            if t.face not in best or key < best[t.face][0]:
                best[t.face] = (key, rec)
        elif rec.top_label != UNKNOWN:
            tagged.setdefault(NegativeTag.FALSE_ACCEPT, []).append(rec.score)
    tags = {
        Category.UNKNOWN: NegativeTag.PLAIN_UNKNOWN,
        Category.MASKED_IN_TRAINING: NegativeTag.MASKED_IN_TRAINING,
        Category.MASKED_NOT_IN_TRAINING: NegativeTag.MASKED_NOT_IN_TRAINING,
    }
    positives = []
    for f, (_, rec) in best.items():
        face = faces[f]
        if face.category is Category.KNOWN:
            if rec.top_label == face.label:
                positives.append((rec.score, vis[f]))
        elif rec.top_label != UNKNOWN:
            tagged.setdefault(tags[face.category], []).append(rec.score)
    positives.sort()
    return ScorePartition(
        positives=tuple(s for s, _ in positives),
        positive_faces=tuple(f for _, f in positives),
        tagged_negatives={t: tuple(sorted(tagged[t])) for t in NegativeTag if t in tagged},
        denominator=scenario.manifests[split].N,
    )


def write_scenario(scenario: Scenario, out_dir) -> list[Path]:
    """Write manifests, submissions and bookkeeping in the standard file formats."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for split, manifest in scenario.manifests.items():
        csv_name = f"{split.value}.csv"
        write_manifest(out / csv_name, manifest)
        write_manifest_json(out / f"{split.value}.json", manifest, csv_name)
        written += [out / csv_name, out / f"{split.value}.json"]
        for name, recs in scenario.detections[split].items():
            path = out / f"detections_{name}_{split.value}.csv"
            write_detections(path, recs)
            written.append(path)
        for name, recs in scenario.recognitions[split].items():
            path = out / f"recognitions_{name}_{split.value}.csv"
            write_recognitions(path, recs)
            written.append(path)
    truth = {
        "spec": asdict(scenario.spec),
        "hidden_faces": {
            split.value: [
                {"image_id": f.image_id, "box": list(f.box.as_tuple()), "label": f.label,
                 "category": f.category.value}
                for f, v in zip(scenario.faces[split], scenario.visible_index[split]) if v is None
            ]
            for split in scenario.faces
        },
        "detections": {
            split.value: {n: [asdict(t) for t in ts] for n, ts in per.items()}
            for split, per in scenario.detection_truth.items()
        },
        "recognitions": {
            split.value: {n: [asdict(t) for t in ts] for n, ts in per.items()}
            for split, per in scenario.recognition_truth.items()
        },
    }
    path = out / "truth.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=1, sort_keys=True)
        fh.write("\n")
    written.append(path)
    return written
