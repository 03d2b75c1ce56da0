"""Detection scoring: IoU, per-class NMS, greedy matching, interpolated AP,
and a dataset-level report.

Matching is the usual single-threshold protocol: within an image and class,
predictions are taken in descending confidence and each one claims the
still-unmatched ground-truth box it overlaps best, counting as a true
positive when that IoU reaches the threshold. AP integrates the all-point
interpolated precision envelope over recall; mAP averages AP over classes
that have at least one ground-truth box.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import Annotation, Detection, NormBBox
from .dataset import DatasetConfig, list_split_items
from .errors import (
    BadTauError,
    ClassOutOfRangeError,
    CoordOutOfRangeError,
    MalformedLineError,
    NoGroundTruthError,
    UnreadableFileError,
)


def iou(a: NormBBox, b: NormBBox) -> float:
    """Intersection-over-union of two normalized boxes (0 when disjoint)."""
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


def nms(detections: Sequence[Detection], tau: float) -> list[Detection]:
    """Greedy per-class non-maximum suppression.

    Detections are visited in descending confidence (ties keep input
    order); each kept detection suppresses later same-class detections
    whose IoU with it exceeds ``tau``. The kept list comes back in that
    same visiting order.
    """
    if not 0.0 <= tau <= 1.0:
        raise BadTauError(f"tau must be in [0, 1], got {tau}")
    ranked = sorted(detections, key=lambda d: -d.confidence)
    kept: list[Detection] = []
    for cand in ranked:
        suppressed = any(
            k.class_id == cand.class_id and iou(k.bbox, cand.bbox) > tau
            for k in kept
        )
        if not suppressed:
            kept.append(cand)
    return kept


@dataclass(frozen=True)
class MatchRecord:
    """One scored prediction: where it came from and whether it hit."""

    image_id: str
    class_id: int
    confidence: float
    is_tp: bool


@dataclass(frozen=True)
class MatchLedger:
    """All scored predictions plus ground-truth totals, ready for curves.

    ``records`` is globally sorted by descending confidence with stable
    ties, so cumulative sums over it directly yield PR curves.
    """

    records: tuple[MatchRecord, ...]
    gt_totals: dict[int, int] = field(default_factory=dict)

    def for_class(self, class_id: int) -> tuple[MatchRecord, ...]:
        return tuple(r for r in self.records if r.class_id == class_id)

    @property
    def num_gt(self) -> int:
        return sum(self.gt_totals.values())


def match_detections(
    predictions: Mapping[str, Sequence[Detection]],
    ground_truth: Mapping[str, Sequence[Annotation]],
    iou_thresh: float = 0.5,
) -> MatchLedger:
    """Score every prediction against its image's ground truth.

    Images appearing only in ``ground_truth`` still contribute their boxes
    to the totals (they are pure missed detections); images appearing only
    in ``predictions`` contribute pure false positives.
    """
    gt_totals: dict[int, int] = {}
    for anns in ground_truth.values():
        for ann in anns:
            gt_totals[ann.class_id] = gt_totals.get(ann.class_id, 0) + 1

    records: list[MatchRecord] = []
    image_ids = list(dict.fromkeys([*ground_truth.keys(), *predictions.keys()]))
    for image_id in image_ids:
        preds = list(predictions.get(image_id, ()))
        gts = list(ground_truth.get(image_id, ()))
        classes = list(dict.fromkeys(d.class_id for d in preds))
        for class_id in classes:
            cls_preds = sorted(
                (d for d in preds if d.class_id == class_id),
                key=lambda d: -d.confidence,
            )
            cls_gts = [a for a in gts if a.class_id == class_id]
            matched = [False] * len(cls_gts)
            for det in cls_preds:
                best_iou, best_j = 0.0, -1
                for j, ann in enumerate(cls_gts):
                    if matched[j]:
                        continue
                    overlap = iou(det.bbox, ann.bbox)
                    if overlap > best_iou:
                        best_iou, best_j = overlap, j
                hit = best_j >= 0 and best_iou >= iou_thresh
                if hit:
                    matched[best_j] = True
                records.append(
                    MatchRecord(image_id, class_id, det.confidence, hit)
                )

    records.sort(key=lambda r: -r.confidence)
    return MatchLedger(records=tuple(records), gt_totals=gt_totals)


def precision_recall(
    ledger: MatchLedger, class_id: Optional[int] = None
) -> tuple[float, float]:
    """Precision and recall at the full ranking (all predictions kept).

    With no predictions, precision is vacuously 1.0. With no ground truth,
    recall is vacuously 1.0; with ground truth but no hits it is 0.0.
    """
    if class_id is None:
        records = ledger.records
        total_gt = ledger.num_gt
    else:
        records = ledger.for_class(class_id)
        total_gt = ledger.gt_totals.get(class_id, 0)
    tp = sum(1 for r in records if r.is_tp)
    n = len(records)
    precision = tp / n if n else 1.0
    recall = tp / total_gt if total_gt else 1.0
    return precision, recall


def average_precision(ledger: MatchLedger, class_id: int) -> float:
    """All-point interpolated AP for one class.

    Requires at least one ground-truth box of the class; zero predictions
    then score 0.0.
    """
    total_gt = ledger.gt_totals.get(class_id, 0)
    if total_gt == 0:
        raise NoGroundTruthError(f"class {class_id} has no ground-truth boxes")
    records = ledger.for_class(class_id)
    if not records:
        return 0.0
    flags = np.array([r.is_tp for r in records], dtype=np.float64)
    tp_cum = np.cumsum(flags)
    fp_cum = np.cumsum(1.0 - flags)
    recall = tp_cum / total_gt
    precision = tp_cum / (tp_cum + fp_cum)

    mrec = np.concatenate(([0.0], recall))
    mpre = np.concatenate(([0.0], precision))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    steps = np.nonzero(mrec[1:] > mrec[:-1])[0] + 1
    return float(np.sum((mrec[steps] - mrec[steps - 1]) * mpre[steps]))


def pr_curve(ledger: MatchLedger, class_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Raw (recall, precision) points down the ranking, for plotting."""
    records = ledger.for_class(class_id)
    total_gt = ledger.gt_totals.get(class_id, 0)
    if not records or total_gt == 0:
        return np.zeros(0), np.zeros(0)
    flags = np.array([r.is_tp for r in records], dtype=np.float64)
    tp_cum = np.cumsum(flags)
    fp_cum = np.cumsum(1.0 - flags)
    return tp_cum / total_gt, tp_cum / (tp_cum + fp_cum)


@dataclass(frozen=True)
class ClassResult:
    """Scores for one class; ``ap`` is None when the class has no ground truth."""

    name: str
    ap: Optional[float]
    precision: float
    recall: float
    num_gt: int
    num_pred: int
    num_tp: int


@dataclass(frozen=True)
class EvalReport:
    """Everything evaluate() produced, including the evidence ledger."""

    class_results: tuple[ClassResult, ...]
    map50: float
    dataset_precision: float
    dataset_recall: float
    num_images: int
    ledger: MatchLedger
    class_names: tuple[str, ...]


def parse_predictions(text: str, num_classes: int) -> list[Detection]:
    """Parse prediction lines ``class_id confidence cx cy w h``."""
    out: list[Detection] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 6:
            raise MalformedLineError(
                f"line {lineno}: expected 6 fields, got {len(fields)}"
            )
        try:
            class_id = int(fields[0])
            confidence, cx, cy, w, h = (float(v) for v in fields[1:])
        except ValueError as exc:
            raise MalformedLineError(f"line {lineno}: {exc}") from exc
        if not 0 <= class_id < num_classes:
            raise ClassOutOfRangeError(
                f"line {lineno}: class {class_id} outside [0, {num_classes})"
            )
        if not 0.0 <= confidence <= 1.0:
            raise MalformedLineError(
                f"line {lineno}: confidence {confidence} outside [0, 1]"
            )
        if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0 and 0.0 < w <= 1.0 and 0.0 < h <= 1.0):
            raise CoordOutOfRangeError(f"line {lineno}: coordinates out of range")
        out.append(Detection(class_id, confidence, NormBBox(cx, cy, w, h)))
    return out


def score_ledger(
    ledger: MatchLedger, class_names: Sequence[str], num_images: int
) -> EvalReport:
    """Turn a match ledger into the final per-class and dataset report."""
    results = []
    aps = []
    for class_id, name in enumerate(class_names):
        records = ledger.for_class(class_id)
        num_gt = ledger.gt_totals.get(class_id, 0)
        p, r = precision_recall(ledger, class_id)
        if num_gt > 0:
            ap = average_precision(ledger, class_id)
            aps.append(ap)
        else:
            ap = None
        results.append(
            ClassResult(
                name=name,
                ap=ap,
                precision=p,
                recall=r,
                num_gt=num_gt,
                num_pred=len(records),
                num_tp=sum(1 for rec in records if rec.is_tp),
            )
        )
    dataset_p, dataset_r = precision_recall(ledger)
    map50 = float(np.mean(aps)) if aps else 0.0
    return EvalReport(
        class_results=tuple(results),
        map50=map50,
        dataset_precision=dataset_p,
        dataset_recall=dataset_r,
        num_images=num_images,
        ledger=ledger,
        class_names=tuple(class_names),
    )


def evaluate(
    pred_root: Path,
    config: DatasetConfig,
    split: str = "test",
    tau_nms: float = 0.5,
    iou_thresh: float = 0.5,
    threads: int = 1,
) -> EvalReport:
    """Score a directory of prediction files against one dataset split.

    ``pred_root`` holds ``<stem>.txt`` files matching split image stems; a
    missing file means the detector produced nothing for that image. Each
    image's predictions pass through NMS at ``tau_nms`` before matching at
    ``iou_thresh``.
    """
    pred_root = Path(pred_root)
    items = list_split_items(config.split_dir(split), config.num_classes)

    def load_one(item) -> list[Detection]:
        path = pred_root / f"{item.stem}.txt"
        if not path.is_file():
            return []
        try:
            dets = parse_predictions(path.read_text(), config.num_classes)
        except OSError as exc:
            raise UnreadableFileError(f"{path}: {exc}") from exc
        except (MalformedLineError, ClassOutOfRangeError, CoordOutOfRangeError) as exc:
            raise type(exc)(f"{path}: {exc}") from exc
        return nms(dets, tau_nms)

    if threads <= 1:
        per_image = [load_one(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_image = list(pool.map(load_one, items))

    predictions = {item.stem: dets for item, dets in zip(items, per_image)}
    ground_truth = {item.stem: item.annotations for item in items}
    ledger = match_detections(predictions, ground_truth, iou_thresh)
    return score_ledger(ledger, config.class_names, num_images=len(items))


def render_report(report: EvalReport) -> str:
    """Human-readable table, four decimals throughout."""
    lines = []
    header = f"{'class':<16} {'AP@0.50':>8} {'P':>8} {'R':>8} {'GT':>6} {'preds':>6} {'TP':>6}"
    lines.append(header)
    lines.append("-" * len(header))
    for res in report.class_results:
        ap_text = f"{res.ap:.4f}" if res.ap is not None else "   n/a"
        lines.append(
            f"{res.name:<16} {ap_text:>8} {res.precision:>8.4f} {res.recall:>8.4f}"
            f" {res.num_gt:>6d} {res.num_pred:>6d} {res.num_tp:>6d}"
        )
    lines.append("-" * len(header))
    lines.append(
        f"{'all':<16} {report.map50:>8.4f} {report.dataset_precision:>8.4f}"
        f" {report.dataset_recall:>8.4f} {report.ledger.num_gt:>6d}"
        f" {len(report.ledger.records):>6d}"
        f" {sum(1 for r in report.ledger.records if r.is_tp):>6d}"
    )
    lines.append(f"images: {report.num_images}   mAP@0.50: {report.map50:.4f}")
    return "\n".join(lines) + "\n"


def render_report_csv(report: EvalReport) -> str:
    """Machine-readable block: one row per class, then the mAP row."""
    lines = ["class,ap,precision,recall"]
    for res in report.class_results:
        ap_text = f"{res.ap:.4f}" if res.ap is not None else ""
        lines.append(
            f"{res.name},{ap_text},{res.precision:.4f},{res.recall:.4f}"
        )
    lines.append(f"map50,{report.map50:.4f},,")
    return "\n".join(lines) + "\n"


def render_matches_csv(ledger: MatchLedger) -> str:
    """The scored ranking as CSV, confidence to four decimals."""
    lines = ["image_id,class_id,confidence,is_tp"]
    for rec in ledger.records:
        lines.append(
            f"{rec.image_id},{rec.class_id},{rec.confidence:.4f},{int(rec.is_tp)}"
        )
    return "\n".join(lines) + "\n"
