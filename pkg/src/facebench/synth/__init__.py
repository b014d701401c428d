from .generator import (
    DetectorModel,
    RecognizerModel,
    RecordTruth,
    Scenario,
    ScenarioSpec,
    bookkeeping_detection_partition,
    bookkeeping_recognition_partition,
    generate_scenario,
    write_scenario,
)
from .oracle import oracle_clusters, oracle_curve, oracle_iou, oracle_jaccard, oracle_match

__all__ = [
    "DetectorModel",
    "RecognizerModel",
    "RecordTruth",
    "Scenario",
    "ScenarioSpec",
    "bookkeeping_detection_partition",
    "bookkeeping_recognition_partition",
    "generate_scenario",
    "oracle_clusters",
    "oracle_curve",
    "oracle_iou",
    "oracle_jaccard",
    "oracle_match",
    "write_scenario",
]
