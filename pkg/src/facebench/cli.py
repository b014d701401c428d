"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import io
from .consensus import ConsensusConfig, run_consensus
from .curves import (
    DEFAULT_BUDGETS,
    CurveKind,
    build_curve,
    correct_rejection_curve,
    log_budget_grid,
    summary_table,
)
from .errors import FacebenchError, InvalidArgumentError, ValidationError
from .matching import NegativeTag, partition_detection_scores, partition_recognition_scores
from .protocol import Category, day_split
from .report import emit_report

log = logging.getLogger("facebench")

OUTPUT_ENV = "FACEBENCH_OUTPUT_DIR"


def parse_budgets(text: str) -> list[int]:
    """``10,100,1000`` or ``log:START:STOP:COUNT``."""
    text = text.strip()
    if text.startswith("log:"):
        try:
            _, start, stop, count = text.split(":")
            return log_budget_grid(float(start), float(stop), int(count))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad log grid {text!r}") from None
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad budget list {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("budgets must be positive integers")
    return sorted(set(values))


def _named(items: list[str]) -> dict[str, Path]:
    """Turn ``NAME=PATH`` (or bare ``PATH``, named by file stem) into a mapping."""
    out: dict[str, Path] = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep:
            path, name = item, Path(item).stem
        if name in out:
            raise InvalidArgumentError(f"participant name {name!r} given twice")
        out[name] = Path(path)
    return out


def _output_dir(args) -> Path:
    return Path(args.output_dir or os.environ.get(OUTPUT_ENV) or "facebench-out")


def _workers(args) -> int:
    return max(1, args.workers)


def _print_table(table) -> None:
    for row in table.rows():
        print("  ".join(f"{cell:>10}" for cell in row))


def cmd_validate(args) -> int:
    manifest = io.load_manifest(args.manifest) if args.manifest else None
    failed = 0
    for path in args.files:
        try:
            kind = io.sniff_kind(path)
            if kind == "manifest":
                m = io.load_manifest(path)
                print(f"OK {path}: manifest, M={m.M} N={m.N}")
                continue
            records = (io.parse_detection_file(path) if kind == "detections"
                       else io.parse_recognition_file(path))
            if manifest is not None:
                missing = sorted({r.image_id for r in records} - set(manifest.image_days))
                if missing:
                    raise ValidationError(f"unknown image ids, first: {missing[0]!r}")
            print(f"OK {path}: {kind}, {len(records)} records")
        except ValidationError as exc:
            print(f"FAIL {path}: {exc}", file=sys.stderr)
            failed += 1
    return 1 if failed else 0


def _evaluate(args, kind: CurveKind) -> int:
    manifest = io.load_manifest(args.manifest)
    submissions = _named(args.submissions)
    curves, notes = {}, []
    prefix = kind.value.lower()
    for name, path in submissions.items():
        if kind is CurveKind.FROC:
            part = partition_detection_scores(manifest, io.parse_detection_file(path), _workers(args))
        else:
            part = partition_recognition_scores(
                manifest, io.parse_recognition_file(path), _workers(args)
            )
        curve = build_curve(part, args.budgets, kind)
        curves[f"{prefix}_{name}"] = curve
        saturated = [p.budget for p in curve.points if p.saturated]
        if saturated:
            notes.append(
                f"{name}: only {len(part.negatives)} negatives, so budgets >= {saturated[0]} "
                f"report the total of {len(part.positives)} positives"
            )
        diag = ", ".join(f"{k}={v}" for k, v in sorted(part.diagnostics.items()))
        print(f"{name}: {diag}")
    table = summary_table({n.split("_", 1)[1]: c for n, c in curves.items()})
    emit_report(curves, {f"{prefix}_summary": table}, _output_dir(args), svg=not args.no_svg)
    _print_table(table)
    for note in notes:
        print(f"note: {note}")
    return 0


def cmd_eval_detect(args) -> int:
    return _evaluate(args, CurveKind.FROC)


def cmd_eval_recognize(args) -> int:
    return _evaluate(args, CurveKind.DIR)


def cmd_split_report(args) -> int:
    manifest = io.load_manifest(args.manifest, train=args.train_manifest)
    if args.train_manifest is None and not any(manifest.training_days.values()):
        raise ValidationError("no training-day metadata: pass --train-manifest")
    known = [i for i, a in enumerate(manifest.annotations) if a.category is Category.KNOWN]
    same, different = day_split(manifest, [manifest.annotations[i] for i in known])
    same_keys = {a.key for a in same}
    same_idx = {i for i in known if manifest.annotations[i].key in same_keys}
    diff_idx = set(known) - same_idx
    print(f"same-day faces: {len(same)}, different-day faces: {len(different)}")
    curves = {}
    for name, path in _named(args.submissions).items():
        part = partition_recognition_scores(
            manifest, io.parse_recognition_file(path), _workers(args)
        )
        cands = part.positives + part.negatives
        for label, idx in (("same_day", same_idx), ("different_day", diff_idx)):
            sub = part.restrict(idx, len(idx))
            curves[f"dir_{label}_{name}"] = build_curve(sub, args.budgets, CurveKind.DIR, cands)
            if not idx:
                print(f"note: {name}: no {label.replace('_', '-')} faces; rate undefined")
    emit_report(curves, {}, _output_dir(args), svg=not args.no_svg)
    return 0


def cmd_crr_report(args) -> int:
    manifest = io.load_manifest(args.manifest)
    explicit = args.tags is not None
    tags = [NegativeTag(t) for t in (args.tags or [t.value for t in _CRR_TAGS])]
    curves, failed = {}, False
    for name, path in _named(args.submissions).items():
        part = partition_recognition_scores(
            manifest, io.parse_recognition_file(path), _workers(args)
        )
        for tag in tags:
            try:
                curves[f"crr_{tag.value}_{name}"] = correct_rejection_curve(part, tag, args.budgets)
            except InvalidArgumentError as exc:
                print(f"{'error' if explicit else 'note'}: {name}: {exc}", file=sys.stderr)
                failed = failed or explicit
    emit_report(curves, {}, _output_dir(args), svg=not args.no_svg)
    return 1 if failed else 0


_CRR_TAGS = (NegativeTag.MASKED_IN_TRAINING, NegativeTag.MASKED_NOT_IN_TRAINING,
             NegativeTag.FALSE_ACCEPT)


def cmd_augment(args) -> int:
    config = ConsensusConfig(
        min_detectors=args.min_detectors,
        overlap_threshold=args.overlap_iou,
        calibration_budget=args.calibration_budget,
        upscale_factor=args.upscale,
        min_agreeing_recognizers=args.min_recognizers,
        fusion=args.fusion,
    )
    test = io.load_manifest(args.manifest)
    validation = io.load_manifest(args.validation_manifest, split="validation")
    test_dets = {n: io.parse_detection_file(p) for n, p in _named(args.detections).items()}
    val_paths = _named(args.validation_detections)
    missing = sorted(set(test_dets) - set(val_paths))
    if missing:
        raise ValidationError(f"detector {missing[0]!r} has no validation submission")
    val_dets = {n: io.parse_detection_file(val_paths[n]) for n in test_dets}
    recs = {n: io.parse_recognition_file(p) for n, p in _named(args.recognitions).items()}
    result = run_consensus(test, validation, test_dets, val_dets, recs, config)

    out = _output_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    io.write_manifest(out / "augmented_manifest.csv", result.manifest)
    (out / "audit.log").write_text("\n".join(result.audit) + "\n", encoding="utf-8")
    print(f"M: {test.M} -> {result.manifest.M}, N: {test.N} -> {result.manifest.N}")
    print(f"clusters: {len(result.clusters)}, identity assignments: {len(result.assignments)}")
    return 0


def cmd_synth(args) -> int:
    from .synth import DetectorModel, RecognizerModel, ScenarioSpec, generate_scenario, write_scenario

    detectors = tuple(
        DetectorModel(f"det{k + 1}", miss_rate=0.05 + 0.05 * k, false_accepts_per_image=1.0 + k,
                      shrink=0.3, duplicate_rate=0.05)
        for k in range(args.detectors)
    )
    recognizers = tuple(
        RecognizerModel(f"rec{k + 1}", DetectorModel(f"rec{k + 1}-det", shrink=0.3),
                        rank1_accuracy=0.9 - 0.1 * k, unknown_rejection=0.6)
        for k in range(args.recognizers)
    )
    spec = ScenarioSpec(
        seed=args.seed,
        image_count=args.images,
        faces_per_image=(0, args.max_faces),
        crowded=args.crowded,
        hidden_face_rate=args.hidden_rate,
        detectors=detectors,
        recognizers=recognizers,
    )
    written = write_scenario(generate_scenario(spec), _output_dir(args))
    print(f"wrote {len(written)} files to {_output_dir(args)}")
    return 0


def cmd_summarize(args) -> int:
    manifests = {str(p): io.load_manifest(p) for p in args.manifests}
    header = ["category"] + [f"{Path(n).stem}:{k}" for n in manifests for k in ("subjects", "faces")]
    rows = [header]
    for cat in Category:
        row = [cat.name]
        for m in manifests.values():
            subjects = m.subject_counts()[cat]
            row += ["?" if subjects is None else str(subjects), str(m.category_counts()[cat])]
        rows.append(row)
    total = ["TOTAL"]
    for m in manifests.values():
        total += ["", str(m.M)]
    rows.append(total)
    for row in rows:
        print("  ".join(f"{cell:>16}" for cell in row))
    for name, m in manifests.items():
        print(f"{name}: M={m.M} N={m.N}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facebench", description="Open-set face detection and identification benchmark scoring"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, budgets=True):
        p.add_argument("--output-dir", help=f"report directory (default ${OUTPUT_ENV} or ./facebench-out)")
        p.add_argument("--workers", type=int, default=min(4, os.cpu_count() or 1))
        p.add_argument("--no-svg", action="store_true", help="skip SVG plots")
        if budgets:
            p.add_argument("--budgets", type=parse_budgets, default=list(DEFAULT_BUDGETS),
                           help="comma list or log:START:STOP:COUNT")

    p = sub.add_parser("validate", help="check manifest and submission files")
    p.add_argument("files", nargs="+")
    p.add_argument("--manifest", help="also check that submission image ids exist")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval-detect", help="FROC evaluation of detection submissions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detections", dest="submissions", nargs="+", required=True,
                   metavar="[NAME=]PATH")
    common(p)
    p.set_defaults(func=cmd_eval_detect)

    p = sub.add_parser("eval-recognize", help="rank-1 DIR evaluation of recognition submissions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--recognitions", dest="submissions", nargs="+", required=True,
                   metavar="[NAME=]PATH")
    common(p)
    p.set_defaults(func=cmd_eval_recognize)

    p = sub.add_parser("split-report", help="same-day vs different-day DIR curves")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-manifest")
    p.add_argument("--recognitions", dest="submissions", nargs="+", required=True,
                   metavar="[NAME=]PATH")
    common(p)
    p.set_defaults(func=cmd_split_report)

    p = sub.add_parser("crr-report", help="correct rejection rates of masked faces and false accepts")
    p.add_argument("--manifest", required=True)
    p.add_argument("--recognitions", dest="submissions", nargs="+", required=True,
                   metavar="[NAME=]PATH")
    p.add_argument("--tags", nargs="+", choices=[t.value for t in _CRR_TAGS])
    common(p)
    p.set_defaults(func=cmd_crr_report)

    p = sub.add_parser("augment", help="add faces and identities by detector/recognizer consensus")
    p.add_argument("--manifest", required=True, help="manifest to augment")
    p.add_argument("--validation-manifest", required=True)
    p.add_argument("--detections", nargs="+", required=True, metavar="NAME=PATH")
    p.add_argument("--validation-detections", nargs="+", required=True, metavar="NAME=PATH")
    p.add_argument("--recognitions", nargs="+", required=True, metavar="NAME=PATH")
    p.add_argument("--min-detectors", type=int, default=3)
    p.add_argument("--overlap-iou", type=float, default=0.25)
    p.add_argument("--calibration-budget", type=int, default=2500)
    p.add_argument("--upscale", type=float, default=1.2)
    p.add_argument("--min-recognizers", type=int, default=3)
    p.add_argument("--fusion", choices=["xywh", "corners"], default="xywh")
    common(p, budgets=False)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("synth", help="generate a synthetic challenge")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--images", type=int, default=50)
    p.add_argument("--max-faces", type=int, default=10)
    p.add_argument("--detectors", type=int, default=3)
    p.add_argument("--recognizers", type=int, default=3)
    p.add_argument("--crowded", action="store_true")
    p.add_argument("--hidden-rate", type=float, default=0.0)
    common(p, budgets=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("summarize", help="subject and face counts per category")
    p.add_argument("manifests", nargs="+")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValidationError, InvalidArgumentError, FacebenchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
