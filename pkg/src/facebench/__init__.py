"""Scoring toolkit for open-set face detection and identification benchmarks."""

from .curves import (
    DEFAULT_BUDGETS,
    Curve,
    CurveKind,
    OperatingPoint,
    build_curve,
    calibrate_threshold,
    correct_rejection_curve,
    detection_rate,
    identification_rate,
    summary_table,
)
from .geometry import BoundingBox, intersection_area, iou, modified_jaccard
from .matching import (
    DetectionRecord,
    NegativeTag,
    RecognitionRecord,
    ScorePartition,
    partition_detection_scores,
    partition_recognition_scores,
)
from .protocol import Category, FaceAnnotation, ProtocolManifest, Split, day_split, masked_view

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_BUDGETS",
    "BoundingBox",
    "Category",
    "Curve",
    "CurveKind",
    "DetectionRecord",
    "FaceAnnotation",
    "NegativeTag",
    "OperatingPoint",
    "ProtocolManifest",
    "RecognitionRecord",
    "ScorePartition",
    "Split",
    "build_curve",
    "calibrate_threshold",
    "correct_rejection_curve",
    "day_split",
    "detection_rate",
    "identification_rate",
    "intersection_area",
    "iou",
    "masked_view",
    "modified_jaccard",
    "partition_detection_scores",
    "partition_recognition_scores",
    "summary_table",
]
