"""Detection evaluation: greedy matching, interpolated AP, and report assembly.

AP uses 101-point interpolation (precision envelope sampled at recalls
0.00, 0.01, ..., 1.00). The headline metrics are mean precision and mean
recall at a fixed confidence operating point (default 0.4, IoU 0.5) plus
mAP@0.5 and mAP@0.5:0.95 over all predictions. Class means run over classes
with at least one ground truth; zero-ground-truth classes are reported with
AP 0 and flagged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corruptions import corruption_tag
from .errors import InputError
from .formats import read_detections_jsonl, read_label_file
from .geometry import BoundingBox, iou

IOU_GRID = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))  # 0.5 .. 0.95
RECALL_SAMPLES = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    label: str
    box: BoundingBox


@dataclass(frozen=True)
class Prediction:
    image_id: str
    label: str
    box: BoundingBox
    confidence: float


def match_detections(
    predictions: list[Prediction],
    ground_truths: list[GroundTruth],
    iou_threshold: float,
) -> list[tuple[Prediction, bool]]:
    """Greedy one-to-one matching within each (image, class) group.

    Predictions are visited in descending confidence (stable for ties); each
    claims the unmatched same-class ground truth with the highest IoU at or
    above the threshold, ties broken by ground-truth input order. Returns
    (prediction, is_true_positive) pairs in the visit order.
    """
    gt_groups: dict[tuple[str, str], list[int]] = {}
    for idx, gt in enumerate(ground_truths):
        gt_groups.setdefault((gt.image_id, gt.label), []).append(idx)
    matched: set[int] = set()

    ordered = sorted(predictions, key=lambda p: -p.confidence)
    results = []
    for pred in ordered:
        best_idx = -1
        best_iou = 0.0
        for idx in gt_groups.get((pred.image_id, pred.label), []):
            if idx in matched:
                continue
            overlap = iou(pred.box, ground_truths[idx].box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_idx = idx
        if best_idx >= 0:
            matched.add(best_idx)
            results.append((pred, True))
        else:
            results.append((pred, False))
    return results


def average_precision(flags: list[bool], total_gt: int) -> float:
    """101-point interpolated AP from rank-ordered TP/FP flags."""
    if total_gt < 0:
        raise ValueError("total_gt must be >= 0")
    if total_gt == 0:
        return 0.0
    if not flags:
        return 0.0
    tp = np.cumsum([1.0 if f else 0.0 for f in flags])
    fp = np.cumsum([0.0 if f else 1.0 for f in flags])
    recall = tp / total_gt
    precision = tp / np.maximum(tp + fp, 1e-12)

    # Monotone non-increasing precision envelope, then sample it.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    indices = np.searchsorted(recall, RECALL_SAMPLES, side="left")
    sampled = np.where(indices < len(envelope), envelope[np.minimum(indices, len(envelope) - 1)], 0.0)
    return float(sampled.mean())


@dataclass
class MetricReport:
    mean_precision: float
    mean_recall: float
    map50: float
    map50_95: float
    conf_threshold: float
    per_class_ap: dict[str, dict[str, float]] = field(default_factory=dict)
    per_class_pr: dict[str, dict[str, float]] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    flagged_classes: list[str] = field(default_factory=list)
    groups: dict[str, "MetricReport"] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        doc = {
            "mP": self.mean_precision,
            "mR": self.mean_recall,
            "mAP@0.5": self.map50,
            "mAP@0.5:0.95": self.map50_95,
            "conf_threshold": self.conf_threshold,
            "per_class_ap": self.per_class_ap,
            "per_class_pr": self.per_class_pr,
            "counts": self.counts,
            "flagged_classes": self.flagged_classes,
            "warnings": self.warnings,
        }
        if self.groups:
            doc["groups"] = {name: sub.to_dict() for name, sub in self.groups.items()}
        return doc

    def table(self) -> str:
        """Aligned text table: overall row plus one row per group."""
        headers = ["set", "mP", "mR", "mAP@0.5", "mAP@0.5:0.95"]
        rows = [["overall", *(f"{v:.4f}" for v in
                              (self.mean_precision, self.mean_recall, self.map50, self.map50_95))]]
        for name in sorted(self.groups):
            sub = self.groups[name]
            rows.append([name, *(f"{v:.4f}" for v in
                                 (sub.mean_precision, sub.mean_recall, sub.map50, sub.map50_95))])
        widths = [max(len(r[i]) for r in [headers, *rows]) for i in range(len(headers))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for row in rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        return "\n".join(lines)


def _evaluate_flat(
    predictions: list[Prediction],
    ground_truths: list[GroundTruth],
    conf_threshold: float,
) -> MetricReport:
    classes_with_gt = sorted({gt.label for gt in ground_truths})
    all_classes = sorted({*classes_with_gt, *(p.label for p in predictions)})
    gt_count = {c: sum(1 for g in ground_truths if g.label == c) for c in all_classes}

    per_class_ap: dict[str, dict[str, float]] = {}
    flagged = []
    for cls in all_classes:
        cls_preds = [p for p in predictions if p.label == cls]
        cls_gts = [g for g in ground_truths if g.label == cls]
        aps = {}
        for thr in IOU_GRID:
            ordered = match_detections(cls_preds, cls_gts, thr)
            aps[f"{thr:.2f}"] = average_precision([tp for _, tp in ordered], len(cls_gts))
        per_class_ap[cls] = aps
        if gt_count[cls] == 0:
            flagged.append(cls)

    scoring = classes_with_gt
    if scoring:
        map50 = float(np.mean([per_class_ap[c]["0.50"] for c in scoring]))
        map50_95 = float(np.mean([np.mean(list(per_class_ap[c].values())) for c in scoring]))
    else:
        map50 = map50_95 = 0.0

    # Operating-point precision/recall at IoU 0.5 over conf-thresholded preds.
    per_class_pr: dict[str, dict[str, float]] = {}
    precisions, recalls = [], []
    for cls in scoring:
        cls_preds = [p for p in predictions if p.label == cls and p.confidence >= conf_threshold]
        cls_gts = [g for g in ground_truths if g.label == cls]
        ordered = match_detections(cls_preds, cls_gts, 0.5)
        tp = sum(1 for _, hit in ordered if hit)
        fp = len(ordered) - tp
        precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
        recall = tp / len(cls_gts) if cls_gts else 0.0
        per_class_pr[cls] = {"precision": precision, "recall": recall,
                             "tp": tp, "fp": fp, "gt": len(cls_gts)}
        precisions.append(precision)
        recalls.append(recall)

    return MetricReport(
        mean_precision=float(np.mean(precisions)) if precisions else 0.0,
        mean_recall=float(np.mean(recalls)) if recalls else 0.0,
        map50=map50,
        map50_95=map50_95,
        conf_threshold=conf_threshold,
        per_class_ap=per_class_ap,
        per_class_pr=per_class_pr,
        counts={
            "predictions": len(predictions),
            "ground_truths": len(ground_truths),
            "classes": len(scoring),
        },
        flagged_classes=flagged,
    )


def evaluate(
    predictions: list[Prediction],
    ground_truths: list[GroundTruth],
    conf_threshold: float = 0.4,
    group_of: dict[str, str] | None = None,
) -> MetricReport:
    """Full report: overall metrics plus one sub-report per group.

    `group_of` maps image ids to group names (e.g. corruption tags); images
    without an entry fall into group "clean".
    """
    report = _evaluate_flat(predictions, ground_truths, conf_threshold)
    if group_of is not None:
        names = sorted(set(group_of.values()))
        for name in names:
            ids = {i for i, g in group_of.items() if g == name}
            report.groups[name] = _evaluate_flat(
                [p for p in predictions if p.image_id in ids],
                [g for g in ground_truths if g.image_id in ids],
                conf_threshold,
            )
    return report


def evaluate_files(
    predictions_file: str | Path,
    labels_dir: str | Path,
    images_dir: str | Path,
    class_list: list[str],
    conf_threshold: float = 0.4,
    group_by_corruption: bool = True,
) -> MetricReport:
    """File-level evaluation; proceeds on the id intersection and reports
    mismatch counts as warnings."""
    from PIL import Image

    labels_dir = Path(labels_dir)
    images_dir = Path(images_dir)
    records = read_detections_jsonl(predictions_file)

    sizes: dict[str, tuple[int, int]] = {}
    for path in sorted(images_dir.iterdir()):
        if path.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"):
            with Image.open(path) as img:
                sizes[path.stem] = img.size

    ground_truths = []
    for label_path in sorted(labels_dir.glob("*.txt")):
        stem = label_path.stem
        if stem not in sizes:
            continue
        width, height = sizes[stem]
        for class_idx, box in read_label_file(label_path, width, height):
            if not (0 <= class_idx < len(class_list)):
                raise InputError(f"{label_path}: class index {class_idx} out of range")
            ground_truths.append(GroundTruth(stem, class_list[class_idx], box))

    gt_ids = {g.image_id for g in ground_truths} | set(sizes)
    predictions = []
    orphans = 0
    for rec in records:
        if rec["image_id"] not in gt_ids:
            orphans += 1
            continue
        predictions.append(
            Prediction(rec["image_id"], rec["label"], BoundingBox(*rec["bbox"]), rec["confidence"])
        )

    group_of = None
    if group_by_corruption:
        group_of = {image_id: corruption_tag(image_id) for image_id in sorted(gt_ids)}

    report = evaluate(predictions, ground_truths, conf_threshold, group_of)
    if orphans:
        report.warnings.append(f"{orphans} predictions referenced unknown image ids")
    return report
