"""CSV/JSON file formats for manifests and submissions.

All files are UTF-8 CSV with a mandatory header row. Leading lines starting
with ``#`` are comments; writers emit one carrying the format name and
version, e.g. ``# facebench detections v1``. Manifest comments may add
``key=value`` tokens (``split=test``).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import re
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import ParseError, ValidationError
from .geometry import BoundingBox
from .matching import MAX_CANDIDATES, DetectionRecord, RecognitionRecord
from .protocol import (
    UNKNOWN,
    Category,
    FaceAnnotation,
    ProtocolManifest,
    Split,
    check_annotation,
    training_days_from,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_COLUMNS = ("IMAGE_ID", "DAY_ID", "X", "Y", "WIDTH", "HEIGHT", "LABEL", "CATEGORY")
DETECTION_COLUMNS = ("IMAGE_ID", "X", "Y", "WIDTH", "HEIGHT", "CONFIDENCE")
BOX_COLUMNS = ("X", "Y", "WIDTH", "HEIGHT")
_PAIR_RE = re.compile(r"^(LABEL|SCORE)_(\d+)$")


def format_number(value: float) -> str:
    """Shortest text that parses back to exactly ``value``."""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _read_rows(path) -> Iterator[tuple[int, dict[str, str] | None, list[str]]]:
    """Yield ``(line_number, comment_tokens | None, row)``.

    The first yielded item with ``comment_tokens`` set carries the parsed
    header comments; every other item is a data row (the header included).
    """
    with open(path, encoding="utf-8", newline="") as fh:
        tokens: dict[str, str] = {}
        line_numbers: list[int] = []

        def lines():
            header_seen = False
            for lineno, text in enumerate(fh, start=1):
                stripped = text.strip()
                if not stripped:
                    continue
                if not header_seen and stripped.startswith("#"):
                    for tok in stripped.lstrip("#").split():
                        if "=" in tok:
                            k, v = tok.split("=", 1)
                            tokens[k] = v
                    continue
                header_seen = True
                line_numbers.append(lineno)
                yield text

        reader = csv.reader(lines())
        first = True
        for row in reader:
            lineno = line_numbers[-1]
            if first:
                yield lineno, tokens, row
                first = False
            else:
                yield lineno, None, row
        if first:
            raise ParseError("missing header row", str(path))


def _header_index(path, lineno: int, header: list[str], required: Sequence[str]) -> dict[str, int]:
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise ParseError(f"duplicate columns in header {header}", str(path), lineno)
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"missing columns {missing}", str(path), lineno)
    return {name: i for i, name in enumerate(header)}


def _float(value: str, column: str, path, lineno: int) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ParseError(f"{column} is not a number: {value!r}", str(path), lineno) from None
    if not math.isfinite(out):
        raise ParseError(f"{column} must be finite, got {value!r}", str(path), lineno)
    return out


def _int(value: str, column: str, path, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{column} is not an integer: {value!r}", str(path), lineno) from None


def _box(row: list[str], cols: dict[str, int], path, lineno: int) -> BoundingBox:
    x, y, w, h = (_float(row[cols[c]], c, path, lineno) for c in BOX_COLUMNS)
    if w <= 0 or h <= 0:
        raise ParseError(f"box needs positive WIDTH and HEIGHT, got {w}x{h}", str(path), lineno)
    return BoundingBox(x, y, w, h)


def _check_width(row: list[str], n: int, path, lineno: int) -> None:
    if len(row) != n:
        raise ParseError(f"expected {n} fields, got {len(row)}", str(path), lineno)


# -- detections ----------------------------------------------------------------


def iter_detections(path) -> Iterator[DetectionRecord]:
    rows = _read_rows(path)
    lineno, _, header = next(rows)
    cols = _header_index(path, lineno, header, DETECTION_COLUMNS)
    extra = set(cols) - set(DETECTION_COLUMNS)
    if extra:
        raise ParseError(f"unknown columns {sorted(extra)}", str(path), lineno)
    for lineno, _, row in rows:
        _check_width(row, len(cols), path, lineno)
        image_id = row[cols["IMAGE_ID"]].strip()
        if not image_id:
            raise ParseError("empty IMAGE_ID", str(path), lineno)
        box = _box(row, cols, path, lineno)
        conf = _float(row[cols["CONFIDENCE"]], "CONFIDENCE", path, lineno)
        yield DetectionRecord(image_id, box, conf, line=lineno)


def parse_detection_file(path) -> list[DetectionRecord]:
    return list(iter_detections(path))


def write_detections(path, records: Iterable[DetectionRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# facebench detections v{FORMAT_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DETECTION_COLUMNS)
        for r in records:
            writer.writerow(
                [r.image_id, *(format_number(v) for v in r.box.as_tuple()),
                 format_number(r.confidence)]
            )


# -- recognitions --------------------------------------------------------------


def _pair_columns(path, lineno: int, cols: dict[str, int]) -> int:
    """Validate ``LABEL_k``/``SCORE_k`` columns; return how many pairs the header has."""
    ks: dict[str, set[int]] = {"LABEL": set(), "SCORE": set()}
    for name in cols:
        if name in ("IMAGE_ID", *BOX_COLUMNS):
            continue
        m = _PAIR_RE.match(name)
        if not m:
            raise ParseError(f"unknown column {name!r}", str(path), lineno)
        ks[m.group(1)].add(int(m.group(2)))
    n = len(ks["LABEL"])
    if ks["LABEL"] != ks["SCORE"] or ks["LABEL"] != set(range(1, n + 1)) or n == 0:
        raise ParseError(
            "header needs contiguous LABEL_k/SCORE_k pairs starting at 1", str(path), lineno
        )
    return n


def iter_recognitions(path) -> Iterator[RecognitionRecord]:
    rows = _read_rows(path)
    lineno, _, header = next(rows)
    cols = _header_index(path, lineno, header, ("IMAGE_ID", *BOX_COLUMNS, "LABEL_1", "SCORE_1"))
    n_pairs = _pair_columns(path, lineno, cols)
    for lineno, _, row in rows:
        _check_width(row, len(cols), path, lineno)
        image_id = row[cols["IMAGE_ID"]].strip()
        if not image_id:
            raise ParseError("empty IMAGE_ID", str(path), lineno)
        box = _box(row, cols, path, lineno)
        cands: list[tuple[int, float]] = []
        for k in range(1, n_pairs + 1):
            label_text = row[cols[f"LABEL_{k}"]].strip()
            score_text = row[cols[f"SCORE_{k}"]].strip()
            if not label_text and not score_text:
                continue
            if not label_text or not score_text:
                raise ParseError(f"candidate {k} has a label or score but not both",
                                 str(path), lineno)
            label = _int(label_text, f"LABEL_{k}", path, lineno)
            if label != UNKNOWN and label < 1:
                raise ParseError(f"invalid label {label} in LABEL_{k}", str(path), lineno)
            cands.append((label, _float(score_text, f"SCORE_{k}", path, lineno)))
        if not cands:
            raise ParseError("row has no candidates", str(path), lineno)
        if len(cands) > MAX_CANDIDATES:
            raise ParseError(
                f"{len(cands)} candidates; at most {MAX_CANDIDATES} allowed", str(path), lineno
            )
        labels = [c[0] for c in cands]
        if len(set(labels)) != len(labels):
            raise ParseError(f"duplicate label among candidates {labels}", str(path), lineno)
        ordered = sorted(cands, key=lambda c: -c[1])
        if ordered != cands:
            log.warning("%s:%d: candidates not sorted by score; reordered", path, lineno)
        yield RecognitionRecord(image_id, box, tuple(ordered), line=lineno)


def parse_recognition_file(path) -> list[RecognitionRecord]:
    return list(iter_recognitions(path))


def write_recognitions(path, records: Sequence[RecognitionRecord]) -> None:
    width = max((len(r.candidates) for r in records), default=1)
    header = ["IMAGE_ID", *BOX_COLUMNS]
    for k in range(1, width + 1):
        header += [f"LABEL_{k}", f"SCORE_{k}"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# facebench recognitions v{FORMAT_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in records:
            row = [r.image_id, *(format_number(v) for v in r.box.as_tuple())]
            for label, score in r.candidates:
                row += [str(label), format_number(score)]
            row += [""] * (len(header) - len(row))
            writer.writerow(row)


# -- manifests -----------------------------------------------------------------


def _parse_manifest_csv(path) -> tuple[list[FaceAnnotation], dict[str, str], dict[str, str]]:
    rows = _read_rows(path)
    lineno, tokens, header = next(rows)
    cols = _header_index(path, lineno, header, MANIFEST_COLUMNS)
    extra = set(cols) - set(MANIFEST_COLUMNS)
    if extra:
        raise ParseError(f"unknown columns {sorted(extra)}", str(path), lineno)
    annotations: list[FaceAnnotation] = []
    image_days: dict[str, str] = {}
    seen: dict[tuple, int] = {}
    for lineno, _, row in rows:
        _check_width(row, len(cols), path, lineno)
        image_id = row[cols["IMAGE_ID"]].strip()
        day = row[cols["DAY_ID"]].strip()
        if not image_id:
            raise ParseError("empty IMAGE_ID", str(path), lineno)
        rest = [row[cols[c]].strip() for c in MANIFEST_COLUMNS[2:]]
        if not any(rest):
            # image without faces
            image_days.setdefault(image_id, day)
            if image_days[image_id] != day:
                raise ParseError(f"image {image_id} listed with two days", str(path), lineno)
            continue
        box = _box(row, cols, path, lineno)
        label = _int(row[cols["LABEL"]], "LABEL", path, lineno)
        try:
            category = Category(row[cols["CATEGORY"]].strip())
        except ValueError:
            raise ParseError(
                f"CATEGORY must be one of K, U, MIT, MNT; got {row[cols['CATEGORY']]!r}",
                str(path), lineno,
            ) from None
        key = (image_id, box)
        if key in seen:
            raise ParseError(f"duplicate annotation (first on line {seen[key]})", str(path), lineno)
        seen[key] = lineno
        try:
            ann = FaceAnnotation(image_id, box, label, category, day)
            check_annotation(ann, participant_view=False)
        except ValidationError as exc:
            raise ParseError(str(exc), str(path), lineno) from None
        annotations.append(ann)
    return annotations, image_days, tokens


def load_manifest(path, split: str | Split | None = None, train=None) -> ProtocolManifest:
    """Load a CSV or JSON manifest.

    ``train`` (a manifest or a path) supplies the training-day map used for
    same-day analysis. A training split is its own reference.
    """
    path = Path(path)
    training_days: dict[int, frozenset[str]] = {}
    if path.suffix.lower() == ".json":
        with open(path, encoding="utf-8") as fh:
            try:
                meta = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", str(path), exc.lineno) from None
        if "annotations_csv" in meta:
            annotations, image_days, _ = _parse_manifest_csv(path.parent / meta["annotations_csv"])
        else:
            annotations, image_days = [], {}
            for i, a in enumerate(meta.get("annotations", [])):
                try:
                    annotations.append(
                        FaceAnnotation(
                            str(a["image_id"]),
                            BoundingBox(a["x"], a["y"], a["width"], a["height"]),
                            a["label"], Category(a["category"]), str(a.get("day_id", "")),
                        )
                    )
                except (KeyError, ValueError, TypeError) as exc:
                    raise ParseError(f"annotation {i}: {exc}", str(path)) from None
        image_days.update(meta.get("images", {}))
        training_days = {int(k): frozenset(v) for k, v in meta.get("training_days", {}).items()}
        file_split = meta.get("split")
    else:
        annotations, image_days, tokens = _parse_manifest_csv(path)
        file_split = tokens.get("split")

    resolved = Split(split or file_split or Split.TEST)
    if train is not None:
        if not isinstance(train, ProtocolManifest):
            train = load_manifest(train, split=Split.TRAIN)
        training_days = training_days_from(train)
    elif resolved is Split.TRAIN:
        training_days = training_days_from(
            ProtocolManifest(Split.TRAIN, annotations, image_days=image_days)
        )
    return ProtocolManifest(
        resolved, annotations, training_days=training_days, image_days=image_days
    )


def write_manifest(path, manifest: ProtocolManifest, participant: bool = False) -> None:
    """Write the CSV manifest.

    With ``participant=True`` masked faces are exported as ``-1`` / ``U`` so
    the file does not reveal which unknowns are masked identities.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# facebench manifest v{FORMAT_VERSION} split={manifest.split.value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        with_faces = set()
        for a in manifest.annotations:
            with_faces.add(a.image_id)
            label, category = a.label, a.category
            if participant and category.is_masked:
                label, category = UNKNOWN, Category.UNKNOWN
            writer.writerow(
                [a.image_id, a.day_id, *(format_number(v) for v in a.box.as_tuple()),
                 str(label), category.value]
            )
        for image_id, day in manifest.image_days.items():
            if image_id not in with_faces:
                writer.writerow([image_id, day, "", "", "", "", "", ""])


def write_manifest_json(path, manifest: ProtocolManifest, annotations_csv: str) -> None:
    """Write JSON metadata that points at a CSV manifest next to it."""
    meta = {
        "format": "facebench-manifest",
        "version": FORMAT_VERSION,
        "split": manifest.split.value,
        "annotations_csv": annotations_csv,
        "training_days": {
            str(k): sorted(v) for k, v in sorted(manifest.training_days.items()) if v
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sniff_kind(path) -> str:
    """Guess which file type ``path`` holds from its header row."""
    if os.fspath(path).lower().endswith(".json"):
        return "manifest"
    rows = _read_rows(path)
    _, _, header = next(rows)
    header = {h.strip() for h in header}
    if "CATEGORY" in header:
        return "manifest"
    if "CONFIDENCE" in header:
        return "detections"
    if "LABEL_1" in header:
        return "recognitions"
    raise ParseError(f"cannot tell file type from header {sorted(header)}", str(path))
