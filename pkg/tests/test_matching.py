from __future__ import annotations

import random

import pytest

from facebench.errors import ValidationError
from facebench.geometry import BoundingBox
from facebench.matching import (
    DetectionRecord,
    NegativeTag,
    RecognitionRecord,
    assign_best_matches,
    partition_detection_scores,
    partition_recognition_scores,
)
from facebench.protocol import Category, ProtocolManifest, Split
from facebench.synth import (
    DetectorModel,
    RecognizerModel,
    ScenarioSpec,
    bookkeeping_detection_partition,
    bookkeeping_recognition_partition,
    generate_scenario,
    oracle_match,
)

from conftest import face

FA = NegativeTag.FALSE_ACCEPT


def det(image, x, y, w, h, conf):
    return DetectionRecord(image, BoundingBox(x, y, w, h), conf)


def rec(image, x, y, w, h, *cands):
    return RecognitionRecord(image, BoundingBox(x, y, w, h), tuple(cands))


def test_exact_detection_is_positive():
    m = ProtocolManifest("test", [face("a", 0, 0, 20, 20)])
    p = partition_detection_scores(m, [det("a", 0, 0, 20, 20, 0.7)])
    assert p.positives == (0.7,)
    assert p.negatives == ()
    assert p.denominator == 1


def test_detection_on_faceless_image_is_false_accept(small_manifest):
    p = partition_detection_scores(small_manifest, [det("empty", 0, 0, 5, 5, 0.3)])
    assert p.positives == ()
    assert p.tagged_negatives == {FA: (0.3,)}


def test_unknown_image_rejected(small_manifest):
    with pytest.raises(ValidationError, match="nowhere"):
        partition_detection_scores(small_manifest, [det("nowhere", 0, 0, 5, 5, 0.3)])


def test_duplicate_detection_discarded():
    m = ProtocolManifest("test", [face("a", 0, 0, 20, 20)])
    p = partition_detection_scores(
        m, [det("a", 0, 0, 20, 20, 0.4), det("a", 1, 1, 18, 18, 0.9), det("a", 50, 50, 5, 5, 0.2)]
    )
    # both overlap with J = 1; the higher confidence one claims the face
    assert p.positives == (0.9,)
    assert p.tagged_negatives == {FA: (0.2,)}
    assert p.diagnostics["duplicates"] == 1


def test_one_detection_serves_one_face():
    # one box covering two side-by-side faces well enough for both
    m = ProtocolManifest("test", [face("a", 0, 0, 10, 10), face("a", 10, 0, 10, 10)])
    p = partition_detection_scores(m, [det("a", 2, 0, 10, 10, 0.5)])
    assert len(p.positives) == 1
    assert p.positive_faces == (0,)  # J = 0.8/0.2 split -> left face wins


def test_greedy_prefers_face_with_larger_best_overlap():
    m = ProtocolManifest("test", [face("a", 0, 0, 20, 20), face("a", 4, 0, 20, 20)])
    records = [det("a", 4, 0, 20, 20, 0.9), det("a", 0, 0, 20, 20, 0.8)]
    p = partition_detection_scores(m, records)
    assert sorted(zip(p.positive_faces, p.positives)) == [(0, 0.8), (1, 0.9)]


def test_assign_tie_breaks_by_rank():
    import numpy as np

    overlaps = np.array([[1.0, 1.0, 0.2]])
    assert assign_best_matches(overlaps, [2, 1, 0]) == {0: 1}
    assert assign_best_matches(overlaps, [0, 1, 2]) == {0: 0}
    assert assign_best_matches(np.array([[0.49]]), [0]) == {}


def _recognition_manifest():
    return ProtocolManifest(
        "test",
        [
            face("a", 0, 0, 20, 20, 5, Category.KNOWN),
            face("a", 100, 0, 20, 20),
            face("a", 200, 0, 20, 20, 9, Category.MASKED_IN_TRAINING),
            face("a", 300, 0, 20, 20, 11, Category.MASKED_NOT_IN_TRAINING),
            face("a", 400, 0, 20, 20, 6, Category.KNOWN),
        ],
    )


def test_recognition_partition_rules():
    m = _recognition_manifest()
    records = [
        rec("a", 0, 0, 20, 20, (5, 0.9), (7, 0.1)),  # correct -> positive
        rec("a", 100, 0, 20, 20, (-1, 0.8)),  # unknown rejected -> nowhere
        rec("a", 200, 0, 20, 20, (9, 0.7)),  # masked face given its true label -> negative
        rec("a", 300, 0, 20, 20, (3, 0.6)),
        rec("a", 400, 0, 20, 20, (5, 0.55)),  # wrong identity on a known face -> nowhere
        rec("a", 900, 0, 20, 20, (4, 0.5)),  # misdetection with a label -> false accept
        rec("a", 990, 0, 20, 20, (-1, 0.4)),  # misdetection rejected -> nowhere
    ]
    p = partition_recognition_scores(m, records)
    assert p.positives == (0.9,)
    assert p.tagged_negatives == {
        NegativeTag.MASKED_IN_TRAINING: (0.7,),
        NegativeTag.MASKED_NOT_IN_TRAINING: (0.6,),
        FA: (0.5,),
    }
    assert p.denominator == 2
    d = p.diagnostics
    assert d["wrong_identity"] == 1
    assert d["correct_rejections"] == 2
    assert d["records"] == d["positives"] + d["negatives"] + d["duplicates"] + \
        d["wrong_identity"] + d["false_rejections"] + d["correct_rejections"]


def test_unknown_face_with_label_is_plain_unknown_negative():
    m = _recognition_manifest()
    p = partition_recognition_scores(m, [rec("a", 100, 0, 20, 20, (2, 0.3))])
    assert p.tagged_negatives == {NegativeTag.PLAIN_UNKNOWN: (0.3,)}


def test_restrict_keeps_negatives():
    m = _recognition_manifest()
    p = partition_recognition_scores(
        m, [rec("a", 0, 0, 20, 20, (5, 0.9)), rec("a", 400, 0, 20, 20, (6, 0.8)),
            rec("a", 900, 0, 20, 20, (4, 0.5))]
    )
    sub = p.restrict({4}, 1)
    assert sub.positives == (0.8,)
    assert sub.negatives == p.negatives
    assert sub.denominator == 1


def _crowded_spec(seed):
    return ScenarioSpec(
        seed=seed,
        image_count=8,
        faces_per_image=(0, 12),
        crowded=True,
        score_decimals=1,
        splits=("test",),
        detectors=(DetectorModel("d", shrink=0.5, jitter=0.2, duplicate_rate=0.3,
                                 false_accepts_per_image=3),),
        recognizers=(RecognizerModel("r", DetectorModel("rd", shrink=0.4, jitter=0.15,
                                                        duplicate_rate=0.3)),),
    )


@pytest.mark.parametrize("seed", range(5))
def test_permutation_invariance(seed):
    sc = generate_scenario(_crowded_spec(seed))
    m = sc.manifests[Split.TEST]
    dets = sc.detections[Split.TEST]["d"]
    recs = sc.recognitions[Split.TEST]["r"]
    base_d = partition_detection_scores(m, dets)
    base_r = partition_recognition_scores(m, recs)
    rng = random.Random(seed)
    for _ in range(3):
        shuffled_d, shuffled_r = dets[:], recs[:]
        rng.shuffle(shuffled_d)
        rng.shuffle(shuffled_r)
        assert partition_detection_scores(m, shuffled_d) == base_d
        assert partition_recognition_scores(m, shuffled_r) == base_r


@pytest.mark.parametrize("seed", range(5))
def test_matches_oracle_on_crowded_scenes(seed):
    sc = generate_scenario(_crowded_spec(seed))
    m = sc.manifests[Split.TEST]
    dets = sc.detections[Split.TEST]["d"]
    recs = sc.recognitions[Split.TEST]["r"]
    assert partition_detection_scores(m, dets) == oracle_match(m, dets)
    assert partition_recognition_scores(m, recs) == oracle_match(m, recs)


def test_nested_boxes_match_oracle():
    m = ProtocolManifest(
        "test",
        [face("a", 0, 0, 100, 100), face("a", 10, 10, 40, 40), face("a", 20, 20, 20, 20)],
    )
    dets = [det("a", 20, 20, 20, 20, 0.5), det("a", 10, 10, 40, 40, 0.5),
            det("a", 5, 5, 60, 60, 0.9), det("a", 22, 22, 10, 10, 0.5)]
    assert partition_detection_scores(m, dets) == oracle_match(m, dets)


def test_parallel_matches_serial():
    sc = generate_scenario(_crowded_spec(11))
    m = sc.manifests[Split.TEST]
    dets = sc.detections[Split.TEST]["d"]
    assert partition_detection_scores(m, dets, workers=3) == partition_detection_scores(m, dets)


def test_medium_scenario_matches_bookkeeping():
    spec = ScenarioSpec(
        seed=2024,
        image_count=120,
        faces_per_image=(5, 15),
        splits=("test",),
        hidden_face_rate=0.05,
        detectors=(DetectorModel("d", shrink=0.5, duplicate_rate=0.2,
                                 false_accepts_per_image=2),),
        recognizers=(RecognizerModel("r", DetectorModel("rd", shrink=0.3, duplicate_rate=0.2)),),
    )
    sc = generate_scenario(spec)
    m = sc.manifests[Split.TEST]
    assert len(sc.faces[Split.TEST]) >= 1000
    got = partition_detection_scores(m, sc.detections[Split.TEST]["d"])
    assert got == bookkeeping_detection_partition(sc, Split.TEST, "d")
    got = partition_recognition_scores(m, sc.recognitions[Split.TEST]["r"])
    assert got == bookkeeping_recognition_partition(sc, Split.TEST, "r")
