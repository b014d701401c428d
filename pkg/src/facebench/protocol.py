"""Ground-truth data model: labels, masking categories, capture days, manifests."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .errors import ValidationError
from .geometry import BoundingBox

UNKNOWN = -1


class Split(str, enum.Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


class Category(str, enum.Enum):
    KNOWN = "K"
    UNKNOWN = "U"
    MASKED_IN_TRAINING = "MIT"
    MASKED_NOT_IN_TRAINING = "MNT"

    @property
    def is_masked(self) -> bool:
        return self in (Category.MASKED_IN_TRAINING, Category.MASKED_NOT_IN_TRAINING)


def check_label(label: int) -> int:
    """Return ``label`` as int if it is a valid identity label (>= 1 or -1)."""
    if isinstance(label, bool) or int(label) != label:
        raise ValidationError(f"identity label must be an integer, got {label!r}")
    label = int(label)
    if label != UNKNOWN and label < 1:
        raise ValidationError(f"invalid identity label {label}; expected a positive id or -1")
    return label


@dataclass(frozen=True)
class FaceAnnotation:
    image_id: str
    box: BoundingBox
    label: int
    category: Category
    day_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "label", check_label(self.label))
        object.__setattr__(self, "category", Category(self.category))

    @property
    def key(self) -> tuple[str, BoundingBox]:
        return (self.image_id, self.box)


def check_annotation(a: FaceAnnotation, participant_view: bool) -> None:
    cat = a.category
    if cat is Category.KNOWN and a.label < 1:
        raise ValidationError(f"known face on {a.image_id} has label {a.label}")
    if cat is Category.UNKNOWN and a.label != UNKNOWN:
        raise ValidationError(f"unknown face on {a.image_id} has label {a.label}, expected -1")
    if cat.is_masked:
        if participant_view and a.label != UNKNOWN:
            raise ValidationError(f"masked face on {a.image_id} leaks label {a.label}")
        if not participant_view and a.label < 1:
            raise ValidationError(f"masked face on {a.image_id} lacks its true identity")


@dataclass(frozen=True)
class ProtocolManifest:
    """Immutable set of annotated faces for one split.

    ``training_days`` maps each identity to the capture days on which it
    appears in the training split. ``image_days`` lists every image of the
    split with its capture day, including images without any face.
    """

    split: Split
    annotations: tuple[FaceAnnotation, ...]
    training_days: Mapping[int, frozenset[str]] = field(default_factory=dict)
    participant_view: bool = False
    image_days: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "split", Split(self.split))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        seen: set[tuple[str, BoundingBox]] = set()
        for a in self.annotations:
            check_annotation(a, self.participant_view)
            if a.key in seen:
                raise ValidationError(
                    f"duplicate annotation on image {a.image_id} at {a.box.as_tuple()}"
                )
            seen.add(a.key)
        images = dict(self.image_days)
        for a in self.annotations:
            day = images.setdefault(a.image_id, a.day_id)
            if day != a.day_id:
                raise ValidationError(
                    f"image {a.image_id} has faces from two days: {day!r} and {a.day_id!r}"
                )
        object.__setattr__(self, "image_days", dict(sorted(images.items())))
        days = {int(k): frozenset(v) for k, v in self.training_days.items()}
        for a in self.annotations:
            if a.category is Category.KNOWN:
                days.setdefault(a.label, frozenset())
        object.__setattr__(self, "training_days", days)

    @property
    def M(self) -> int:
        return len(self.annotations)

    @property
    def N(self) -> int:
        return sum(1 for a in self.annotations if a.category is Category.KNOWN)

    def category_counts(self) -> dict[Category, int]:
        counts = Counter(a.category for a in self.annotations)
        return {c: counts.get(c, 0) for c in Category}

    def subject_counts(self) -> dict[Category, int | None]:
        """Distinct identities per category; ``None`` where identities are not tracked."""
        out: dict[Category, int | None] = {}
        for c in Category:
            if c is Category.UNKNOWN or (c.is_masked and self.participant_view):
                out[c] = None
            else:
                out[c] = len({a.label for a in self.annotations if a.category is c})
        return out

    def images(self) -> list[str]:
        return list(self.image_days)

    def by_image(self) -> dict[str, list[int]]:
        """Annotation indices grouped per image, in manifest order."""
        groups: dict[str, list[int]] = {}
        for i, a in enumerate(self.annotations):
            groups.setdefault(a.image_id, []).append(i)
        return groups

    def with_annotations(self, annotations: Iterable[FaceAnnotation]) -> ProtocolManifest:
        return replace(self, annotations=tuple(annotations))


def training_days_from(train: ProtocolManifest) -> dict[int, frozenset[str]]:
    """Capture days per identity, taken from every labeled training face."""
    days: dict[int, set[str]] = {}
    for a in train.annotations:
        if a.label >= 1:
            days.setdefault(a.label, set()).add(a.day_id)
    return {k: frozenset(v) for k, v in days.items()}


def masked_view(m: ProtocolManifest) -> ProtocolManifest:
    """Participant-facing copy: every masked face is relabeled -1.

    Categories are kept so the evaluator can still count masked faces; the
    file writer drops them when exporting for participants.
    """
    anns = [replace(a, label=UNKNOWN) if a.category.is_masked else a for a in m.annotations]
    return replace(m, annotations=tuple(anns), participant_view=True)


def day_split(
    m: ProtocolManifest, probe: Iterable[FaceAnnotation]
) -> tuple[list[FaceAnnotation], list[FaceAnnotation]]:
    same: list[FaceAnnotation] = []
    different: list[FaceAnnotation] = []
    for a in probe:
        if a.category is not Category.KNOWN:
            raise ValidationError(
                f"day split needs known probes; face on {a.image_id} is {a.category.name}"
            )
        if a.day_id in m.training_days.get(a.label, ()):
            same.append(a)
        else:
            different.append(a)
    return same, different
