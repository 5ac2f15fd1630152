"""Localisation-value evaluation: IoU, correct-location accuracy, windowed
checkpoint selection, and the three dataset protocols.

A ground-truth box counts as correctly located when the highest-scoring
detection of the same pathology on the same image overlaps it with IoU at or
above the threshold (0.1 by default). Protocols train the same detector on
real annotations alone ("Ori") or real plus one synthetic set, evaluating
every fixed number of steps; reported cells are per-cell maxima over a step
window around each nominal step.
"""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Annotation, BBox, GrayImage, PATHOLOGIES
from .detector import Detection, Detector
from .synthesis import SyntheticRecord
from .validation import check_fraction

logger = logging.getLogger(__name__)

PROTOCOL_REAL_ONLY = "Ori"
PROTOCOL_WITH_SYNTH = "Ori+Pix2Pix"
PROTOCOL_WITH_SYNTH_N = "Ori+Pix2Pix-N"
PROTOCOLS = (PROTOCOL_REAL_ONLY, PROTOCOL_WITH_SYNTH, PROTOCOL_WITH_SYNTH_N)

DEFAULT_IOU_THRESHOLD = 0.1
DEFAULT_EVAL_INTERVAL = 500
DEFAULT_WINDOW_RADIUS = 500


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes in continuous coordinates."""
    inter_w = min(a.x2, b.x2) - max(a.x, b.x)
    inter_h = min(a.y2, b.y2) - max(a.y, b.y)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    inter = inter_w * inter_h
    # (x + w) - x need not equal w in floating point; keep the mathematically
    # guaranteed range.
    return min(1.0, inter / (a.area + b.area - inter))


@dataclass
class AccuracyTable:
    """Per-pathology correct-location accuracy plus the pooled total."""

    per_pathology: dict[str, float]
    total: float
    gt_counts: dict[str, int] = field(default_factory=dict)


@dataclass
class CLReport:
    protocol: str
    iou_threshold: float
    steps: dict[int, AccuracyTable] = field(default_factory=dict)


def cl_accuracy(
    detections: Sequence[Detection],
    ground_truth: Sequence[Annotation],
    threshold: float = DEFAULT_IOU_THRESHOLD,
) -> AccuracyTable:
    """Correct-location accuracy at the given IoU threshold.

    Detection and ground-truth boxes must share one coordinate space; the
    protocol harness rescales ground truth to the image working resolution.
    """
    check_fraction(threshold, "threshold", closed_right=True)
    if not ground_truth:
        raise ValueError("ground truth must be non-empty")
    gt_images = {ann.image_id for ann in ground_truth}
    best: dict[tuple[str, str], Detection] = {}
    for det in detections:
        if det.image_id not in gt_images:
            raise ValueError(f"detection references unknown image {det.image_id!r}")
        key = (det.image_id, det.pathology)
        if key not in best or det.score > best[key].score:
            best[key] = det
    correct: dict[str, int] = {}
    totals: dict[str, int] = {}
    n_correct = 0
    for ann in ground_truth:
        totals[ann.pathology] = totals.get(ann.pathology, 0) + 1
        det = best.get((ann.image_id, ann.pathology))
        if det is not None and iou(det.box, ann.box) >= threshold:
            correct[ann.pathology] = correct.get(ann.pathology, 0) + 1
            n_correct += 1
    per_pathology = {p: correct.get(p, 0) / totals[p] for p in totals}
    return AccuracyTable(
        per_pathology=per_pathology,
        total=n_correct / len(ground_truth),
        gt_counts=totals,
    )


def best_in_window(report: CLReport, step: int, radius: int) -> AccuracyTable:
    """Cell-wise maximum over evaluated checkpoints in [step-radius, step+radius]."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    window = [s for s in report.steps if step - radius <= s <= step + radius]
    if not window:
        raise ValueError(
            f"no evaluated steps in [{step - radius}, {step + radius}] "
            f"(have {sorted(report.steps)})"
        )
    tables = [report.steps[s] for s in sorted(window)]
    pathologies = sorted({p for t in tables for p in t.per_pathology})
    per_pathology = {
        p: max(t.per_pathology[p] for t in tables if p in t.per_pathology)
        for p in pathologies
    }
    return AccuracyTable(
        per_pathology=per_pathology,
        total=max(t.total for t in tables),
        gt_counts=tables[-1].gt_counts,
    )


@dataclass
class LabeledSet:
    """Annotations plus the image store they reference."""

    annotations: list[Annotation]
    images: dict[str, GrayImage]


def _grouped_samples(
    annotations: Sequence[Annotation], images: Mapping[str, GrayImage]
) -> list[tuple[GrayImage, list[Annotation]]]:
    by_image: dict[str, list[Annotation]] = {}
    for ann in annotations:
        by_image.setdefault(ann.image_id, []).append(ann)
    missing = sorted(set(by_image) - set(images))
    if missing:
        raise FileNotFoundError(f"missing images for annotations: {missing[:5]}")
    return [(images[image_id], anns) for image_id, anns in sorted(by_image.items())]


def run_protocol(
    protocol: str,
    real_train: LabeledSet,
    synthetic: Sequence[SyntheticRecord],
    eval_set: LabeledSet,
    detector: Detector,
    budget: int,
    *,
    eval_interval: int = DEFAULT_EVAL_INTERVAL,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    batch_size: int = 2,
    seed: int = 0,
) -> CLReport:
    """Train the detector under one augmentation protocol and evaluate
    correct-location accuracy on the eval set every eval_interval steps.

    The real-only protocol ignores the synthetic list; the augmented
    protocols append one training sample per synthetic record. Every protocol
    must be handed an identically configured detector.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    samples = _grouped_samples(real_train.annotations, real_train.images)
    if protocol != PROTOCOL_REAL_ONLY:
        samples += [
            (record.image, [record.training_annotation()]) for record in synthetic
        ]
    train_ids = {image.id for image, _ in samples}
    eval_ids = {ann.image_id for ann in eval_set.annotations}
    overlap = train_ids & eval_ids
    if overlap:
        raise ValueError(f"eval set overlaps training sources: {sorted(overlap)[:5]}")

    eval_images = [eval_set.images[i] for i in sorted(eval_ids)]
    # Detections come out at the working resolution of the images; bring the
    # ground-truth boxes to that same resolution before scoring.
    eval_truth = [
        replace(
            ann,
            box=ann.box_at(eval_set.images[ann.image_id].width),
            native_resolution=float(eval_set.images[ann.image_id].width),
        )
        for ann in eval_set.annotations
    ]
    report = CLReport(protocol=protocol, iou_threshold=iou_threshold)
    rng = random.Random(f"{seed}:{protocol}")
    step = 0
    order = list(samples)
    logger.info("protocol %s: %d training samples, budget %d", protocol, len(order), budget)
    while step < budget:
        rng.shuffle(order)
        for start in range(0, len(order), batch_size):
            if step >= budget:
                break
            detector.train_step(order[start : start + batch_size])
            step += 1
            if step % eval_interval == 0 or step == budget:
                detections = [d for image in eval_images for d in detector.detect(image)]
                report.steps[step] = cl_accuracy(
                    detections, eval_truth, iou_threshold
                )
                logger.info(
                    "protocol %s step %d: total CL=%.3f",
                    protocol, step, report.steps[step].total,
                )
    return report


def write_report_csv(
    reports: Sequence[CLReport],
    path: str | Path,
    nominal_steps: Sequence[int],
    radius: int = DEFAULT_WINDOW_RADIUS,
    pathologies: Sequence[str] = PATHOLOGIES,
) -> None:
    """Emit the summary table: one row per pathology plus Total, one column
    per (protocol, nominal step) holding the windowed best accuracy."""
    columns = []
    cells: dict[str, list[float | None]] = {p: [] for p in pathologies}
    total_row: list[float | None] = []
    for report in reports:
        for step in nominal_steps:
            columns.append(f"{report.protocol} CL@{step}")
            table = best_in_window(report, step, radius)
            for p in pathologies:
                cells[p].append(table.per_pathology.get(p))
            total_row.append(table.total)
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["pathology"] + columns)
        for p in pathologies:
            writer.writerow([p] + [("" if v is None else f"{v:.4f}") for v in cells[p]])
        writer.writerow(["Total"] + [f"{v:.4f}" for v in total_row])
