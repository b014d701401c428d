from __future__ import annotations

import logging
import tempfile
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facebench.errors import ParseError
from facebench.geometry import BoundingBox
from facebench.io import (
    format_number,
    load_manifest,
    parse_detection_file,
    parse_recognition_file,
    sniff_kind,
    write_detections,
    write_manifest,
    write_manifest_json,
    write_recognitions,
)
from facebench.matching import DetectionRecord, RecognitionRecord
from facebench.protocol import Category, ProtocolManifest, Split

from conftest import face


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


DET_HEADER = "IMAGE_ID,X,Y,WIDTH,HEIGHT,CONFIDENCE\n"


def test_detection_file(tmp_path):
    p = _write(tmp_path / "d.csv", "# comment\n" + DET_HEADER + "a,1,2,3,4,0.5\na,0,0,9.5,9,-2\nb,1,1,1,1,7\n")
    recs = parse_detection_file(p)
    assert [r.line for r in recs] == [3, 4, 5]
    assert recs[1] == DetectionRecord("a", BoundingBox(0, 0, 9.5, 9), -2.0, line=4)


@pytest.mark.parametrize(
    "row, message",
    [
        ("a,1,2,0,4,0.5", "WIDTH"),
        ("a,1,2,3,4,nan", "CONFIDENCE"),
        ("a,1,2,3,4,inf", "CONFIDENCE"),
        ("a,1,2,3,4", "fields"),
        (",1,2,3,4,0.5", "IMAGE_ID"),
        ("a,x,2,3,4,0.5", "X"),
    ],
)
def test_detection_errors_cite_line(tmp_path, row, message):
    p = _write(tmp_path / "d.csv", DET_HEADER + "ok,1,1,1,1,1\n" + row + "\n")
    with pytest.raises(ParseError, match=message) as info:
        parse_detection_file(p)
    assert ":3" in str(info.value)


def test_missing_and_unknown_columns(tmp_path):
    with pytest.raises(ParseError, match="CONFIDENCE"):
        parse_detection_file(_write(tmp_path / "a.csv", "IMAGE_ID,X,Y,WIDTH,HEIGHT\n"))
    with pytest.raises(ParseError, match="unknown"):
        parse_detection_file(_write(tmp_path / "b.csv", DET_HEADER.strip() + ",EXTRA\n"))


def _rec_file(tmp_path, pairs, rows):
    header = "IMAGE_ID,X,Y,WIDTH,HEIGHT," + ",".join(f"LABEL_{k},SCORE_{k}" for k in range(1, pairs + 1))
    return _write(tmp_path / "r.csv", header + "\n" + "\n".join(rows) + "\n")


def test_recognition_single_candidate_and_padding(tmp_path):
    p = _rec_file(tmp_path, 3, ["a,0,0,5,5,4,0.9,,,,", "a,9,9,5,5,-1,0.3,2,0.1,,"])
    recs = parse_recognition_file(p)
    assert recs[0].candidates == ((4, 0.9),)
    assert recs[1].top_label == -1 and len(recs[1].candidates) == 2


def test_eleven_candidates_rejected(tmp_path):
    row = "a,0,0,5,5," + ",".join(f"{k},{1 - k / 100}" for k in range(1, 12))
    with pytest.raises(ParseError, match="11 candidates") as info:
        parse_recognition_file(_rec_file(tmp_path, 11, [row]))
    assert ":2" in str(info.value)


@pytest.mark.parametrize("row, message", [
    ("a,0,0,5,5,0,0.5,,", "label 0"),
    ("a,0,0,5,5,-2,0.5,,", "label -2"),
    ("a,0,0,5,5,3,0.5,3,0.4", "duplicate"),
    ("a,0,0,5,5,3,,,", "both"),
    ("a,0,0,5,5,,,,", "no candidates"),
])
def test_bad_recognition_rows(tmp_path, row, message):
    with pytest.raises(ParseError, match=message):
        parse_recognition_file(_rec_file(tmp_path, 2, [row]))


def test_bad_pair_header(tmp_path):
    p = _write(tmp_path / "r.csv", "IMAGE_ID,X,Y,WIDTH,HEIGHT,LABEL_1,SCORE_1,LABEL_3,SCORE_3\n")
    with pytest.raises(ParseError, match="contiguous"):
        parse_recognition_file(p)


def test_unsorted_candidates_reordered(tmp_path, caplog):
    p = _rec_file(tmp_path, 3, ["a,0,0,5,5,4,0.2,5,0.9,6,0.2"])
    with caplog.at_level(logging.WARNING):
        (rec,) = parse_recognition_file(p)
    # stable: equal scores keep their file order
    assert rec.candidates == ((5, 0.9), (4, 0.2), (6, 0.2))
    assert "reordered" in caplog.text


def test_format_number():
    assert [format_number(v) for v in (3.0, 0.1, float("inf"), -2.5)] == ["3", "0.1", "inf", "-2.5"]
    assert float(format_number(1 / 3)) == 1 / 3


finite = st.floats(-1e6, 1e6, allow_nan=False)
boxes = st.builds(BoundingBox, finite, finite, st.floats(1e-3, 1e4), st.floats(1e-3, 1e4))
image_ids = st.text("abcxyz_-0123456789 ,\"", min_size=1, max_size=8).filter(lambda s: s.strip() == s)


@st.composite
def recognition_records(draw):
    labels = draw(st.lists(st.sampled_from([-1, *range(1, 30)]), min_size=1, max_size=10, unique=True))
    scores = sorted(draw(st.lists(finite, min_size=len(labels), max_size=len(labels))), reverse=True)
    return RecognitionRecord(draw(image_ids), draw(boxes), tuple(zip(labels, scores)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.builds(DetectionRecord, image_ids, boxes, finite), max_size=30))
def test_detection_round_trip(records):
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "d.csv"
        write_detections(path, records)
        back = parse_detection_file(path)
    assert [(r.image_id, r.box, r.confidence) for r in back] == \
        [(r.image_id, r.box, r.confidence) for r in records]


@settings(max_examples=50, deadline=None)
@given(st.lists(recognition_records(), max_size=20))
def test_recognition_round_trip(records):
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "r.csv"
        write_recognitions(path, records)
        back = parse_recognition_file(path)
    assert [(r.image_id, r.box, r.candidates) for r in back] == \
        [(r.image_id, r.box, r.candidates) for r in records]


def test_manifest_round_trip_csv_and_json(tmp_path, small_manifest):
    write_manifest(tmp_path / "m.csv", small_manifest)
    assert sniff_kind(tmp_path / "m.csv") == "manifest"
    back = load_manifest(tmp_path / "m.csv")
    assert back.annotations == small_manifest.annotations
    assert back.image_days == small_manifest.image_days
    assert back.split is Split.TEST

    m = ProtocolManifest("validation", small_manifest.annotations, training_days={1: {"d7"}})
    write_manifest(tmp_path / "v.csv", m)
    write_manifest_json(tmp_path / "v.json", m, "v.csv")
    back = load_manifest(tmp_path / "v.json")
    assert back.split is Split.VALIDATION
    assert back.training_days[1] == frozenset({"d7"})


def test_participant_export_hides_masking(tmp_path):
    m = ProtocolManifest("test", [face("a", label=9, cat=Category.MASKED_IN_TRAINING)])
    write_manifest(tmp_path / "p.csv", m, participant=True)
    assert "a,d1,0,0,10,10,-1,U" in (tmp_path / "p.csv").read_text()
    assert list(load_manifest(tmp_path / "p.csv").annotations) == [face("a")]


def test_manifest_errors(tmp_path):
    header = "IMAGE_ID,DAY_ID,X,Y,WIDTH,HEIGHT,LABEL,CATEGORY\n"
    cases = {
        "a,d,0,0,5,5,3,U": "expected -1",
        "a,d,0,0,5,5,3,Z": "CATEGORY",
        "a,d,0,0,0,5,3,K": "WIDTH",
    }
    for row, msg in cases.items():
        with pytest.raises(ParseError, match=msg) as info:
            load_manifest(_write(tmp_path / "m.csv", header + row + "\n"))
        assert ":2" in str(info.value)
    with pytest.raises(ParseError, match="duplicate"):
        load_manifest(_write(tmp_path / "m.csv", header + "a,d,0,0,5,5,3,K\na,d,0,0,5,5,4,K\n"))


def _table1_manifest(known, unknown, mit=1277, mnt=4466):
    anns, k = [], 0
    for cat, count, label in [
        (Category.KNOWN, known, lambda i: 1 + i % 921),
        (Category.UNKNOWN, unknown, lambda i: -1),
        (Category.MASKED_IN_TRAINING, mit, lambda i: 2000 + i % 116),
        (Category.MASKED_NOT_IN_TRAINING, mnt, lambda i: 3000 + i % 526),
    ]:
        for i in range(count):
            anns.append(face(f"img{k // 20:05d}", 60 * (k % 20), 0, 50, 50, label(i), cat))
            k += 1
    return ProtocolManifest("test", anns)


@pytest.mark.parametrize("known, unknown, M, N", [(12636, 17774, 36153, 12636), (15312, 18983, 40038, 15312)])
def test_full_scale_manifest(tmp_path, known, unknown, M, N):
    write_manifest(tmp_path / "t.csv", _table1_manifest(known, unknown))
    back = load_manifest(tmp_path / "t.csv")
    assert (back.M, back.N) == (M, N)
