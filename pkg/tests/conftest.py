from __future__ import annotations

import pytest

from facebench.geometry import BoundingBox
from facebench.protocol import Category, FaceAnnotation, ProtocolManifest

_acceptance: dict[str, list[str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    _acceptance.setdefault(name, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in sorted(_acceptance.items()):
        status = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")


def face(image="img", x=0, y=0, w=10, h=10, label=-1, cat=Category.UNKNOWN, day="d1"):
    return FaceAnnotation(image, BoundingBox(x, y, w, h), label, cat, day)


@pytest.fixture
def make_face():
    return face


@pytest.fixture
def small_manifest():
    anns = [
        face("a", 0, 0, 20, 20, 1, Category.KNOWN),
        face("a", 100, 0, 20, 20, 2, Category.KNOWN),
        face("b", 0, 0, 20, 20, 3, Category.KNOWN, day="d2"),
        face("b", 100, 100, 20, 20, day="d2"),
        face("c", 0, 0, 20, 20),
    ]
    return ProtocolManifest("test", anns, image_days={"empty": "d1"})


def consensus_inputs():
    """Three detectors and three recognizers over one test image.

    * (100,200,40,40) is missing from the ground truth; all detectors find it.
    * (500,400,40,40) is found by two detectors only.
    * the unknown face at x=300 gets {7,7,7}, the one at x=600 gets {7,7,-1},
      and the masked face at x=900 gets {9,9,9}.
    """
    from facebench.matching import DetectionRecord, RecognitionRecord

    test = ProtocolManifest(
        "test",
        [
            face("img1", 0, 0, 50, 50, 3, Category.KNOWN),
            face("img1", 300, 0, 50, 50),
            face("img1", 600, 0, 50, 50),
            face("img1", 900, 0, 50, 50, 9, Category.MASKED_IN_TRAINING),
        ],
        training_days={3: ("d0",), 9: ("d0",)},
    )
    validation = ProtocolManifest("validation", [face("v1", 0, 0, 50, 50, day="d0")])

    def d(x, y, conf, image="img1"):
        return DetectionRecord(image, BoundingBox(x, y, 40, 40), conf)

    test_dets = {
        "det1": [d(100, 200, 0.9), d(5, 5, 0.5), d(500, 400, 0.3)],
        "det2": [d(102, 200, 0.8), d(5, 5, 0.4), d(502, 400, 0.2)],
        "det3": [d(98, 200, 0.7), d(5, 5, 0.5)],
    }
    val_dets = {n: [DetectionRecord("v1", BoundingBox(0, 0, 50, 50), 0.1)] for n in test_dets}

    def r(x, label, score=0.9):
        return RecognitionRecord("img1", BoundingBox(x, 0, 50, 50), ((label, score),))

    recognitions = {
        "rec1": [r(300, 7), r(600, 7), r(900, 9)],
        "rec2": [r(300, 7), r(600, 7), r(900, 9)],
        "rec3": [r(300, 7), r(600, -1), r(900, 9)],
    }
    return test, validation, test_dets, val_dets, recognitions
