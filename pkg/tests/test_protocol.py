from __future__ import annotations

import pytest

from facebench.errors import ValidationError
from facebench.protocol import (
    Category,
    ProtocolManifest,
    day_split,
    masked_view,
    training_days_from,
)

from conftest import face


def test_counts(small_manifest):
    assert small_manifest.M == 5
    assert small_manifest.N == 3


def test_images_include_faceless(small_manifest):
    assert small_manifest.images() == ["a", "b", "c", "empty"]


@pytest.mark.parametrize(
    "label, cat",
    [
        (-1, Category.KNOWN),
        (5, Category.UNKNOWN),
        (-1, Category.MASKED_IN_TRAINING),
    ],
)
def test_inconsistent_category_rejected(label, cat):
    with pytest.raises(ValidationError):
        ProtocolManifest("test", [face(label=label, cat=cat)])


@pytest.mark.parametrize("label", [0, -2, -7])
def test_invalid_label(label):
    with pytest.raises(ValidationError):
        face(label=label, cat=Category.KNOWN)


def test_duplicate_annotation_rejected():
    with pytest.raises(ValidationError, match="duplicate"):
        ProtocolManifest("test", [face(), face()])


def test_two_days_on_one_image_rejected():
    with pytest.raises(ValidationError, match="two days"):
        ProtocolManifest("test", [face(day="d1"), face(x=50, day="d2")])


def test_masked_view():
    m = ProtocolManifest(
        "test",
        [
            face(label=42, cat=Category.MASKED_IN_TRAINING),
            face(x=20, label=7, cat=Category.KNOWN),
            face(x=40, label=9, cat=Category.MASKED_NOT_IN_TRAINING),
        ],
    )
    v = masked_view(m)
    assert [a.label for a in v.annotations] == [-1, 7, -1]
    assert [a.box for a in v.annotations] == [a.box for a in m.annotations]
    assert v.category_counts() == m.category_counts()
    assert (v.M, v.N) == (m.M, m.N)
    assert masked_view(v) == v
    # the evaluator copy keeps true labels
    assert m.annotations[0].label == 42


def test_masked_count_preserved_at_full_scale():
    anns = [face(image=f"i{k}", label=1000 + k % 116, cat=Category.MASKED_IN_TRAINING)
            for k in range(1277)]
    v = masked_view(ProtocolManifest("test", anns))
    assert v.category_counts()[Category.MASKED_IN_TRAINING] == 1277


def _train():
    return ProtocolManifest(
        "train",
        [
            face("t1", label=1, cat=Category.KNOWN, day="d1"),
            face("t2", label=1, cat=Category.KNOWN, day="d2"),
            face("t3", label=2, cat=Category.KNOWN, day="d3"),
        ],
    )


def test_day_split():
    days = training_days_from(_train())
    probe = [
        face("p1", label=1, cat=Category.KNOWN, day="d2"),
        face("p2", label=2, cat=Category.KNOWN, day="d1"),
        face("p3", label=3, cat=Category.KNOWN, day="d1"),  # never in training
    ]
    m = ProtocolManifest("test", probe, training_days=days)
    same, diff = day_split(m, probe)
    assert same == [probe[0]]
    assert diff == probe[1:]
    assert m.training_days[3] == frozenset()


def test_day_split_rejects_non_known():
    m = ProtocolManifest("test", [face()])
    with pytest.raises(ValidationError):
        day_split(m, m.annotations)


def test_day_split_reported_scale():
    # 20647 same-day faces of 932 identities, 14432 different-day faces of 209 identities
    train_days = {i: frozenset({"home"}) for i in range(1, 933)}
    train_days.update({i: frozenset({"home"}) for i in range(2001, 2210)})
    probe = [face(f"s{k}", label=1 + k % 932, cat=Category.KNOWN, day="home")
             for k in range(20647)]
    probe += [face(f"d{k}", label=2001 + k % 209, cat=Category.KNOWN, day="away")
              for k in range(14432)]
    m = ProtocolManifest("test", probe, training_days=train_days)
    same, diff = day_split(m, probe)
    assert (len(same), len({a.label for a in same})) == (20647, 932)
    assert (len(diff), len({a.label for a in diff})) == (14432, 209)
    assert len(same) + len(diff) == len(probe)
    assert not {a.key for a in same} & {a.key for a in diff}
