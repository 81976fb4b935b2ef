"""Mask- and instance-level evaluation of aligned polygons.

Mask scores are micro-aggregated: per-pixel confusions are summed over the
whole dataset (per class) before computing precision/recall/F1/IoU; the
pooling choice is recorded in the report metadata. Predicted and reference
polygons are rasterized per image as class unions (roofs vs roofs,
footprints vs footprints). The two macro aggregates average the roof and
footprint F1 (resp. IoU). Instance localization is scored by the distance
between polygon centroids, and relative-height accuracy by the absolute
difference between roof-offset norms; both are unweighted means over all
instances, flagged ones included at their frozen positions.
"""
import math
from dataclasses import dataclass

import numpy as np

from .codec import OffsetVec
from .dataio import AnnotationRecord, PredictionRecord
from .geometry import AREA, Polygon, RasterMask, centroid, rasterize

MICRO_POOLING = "micro"


@dataclass(frozen=True)
class PixelConfusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def merged(self, other: "PixelConfusion") -> "PixelConfusion":
        return PixelConfusion(self.tp + other.tp, self.fp + other.fp,
                              self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class MaskScores:
    f1: float
    precision: float
    recall: float
    iou: float


@dataclass(frozen=True)
class InstanceEval:
    """Per-instance localization and height errors."""

    record_id: int
    epe_roof: float
    epe_footprint: float
    le: float


@dataclass(frozen=True)
class Report:
    roof: MaskScores
    footprint: MaskScores
    mf: float
    mi: float
    mean_epe_roof: float
    mean_epe_footprint: float
    ale: float
    instances: int
    pooling: str = MICRO_POOLING
    centroid_mode: str = AREA

    def to_json(self) -> dict:
        def scores_json(s: MaskScores) -> dict:
            return {"f1": s.f1, "precision": s.precision, "recall": s.recall, "iou": s.iou}

        return {
            "roof": scores_json(self.roof),
            "footprint": scores_json(self.footprint),
            "mf": self.mf,
            "mi": self.mi,
            "mean_epe_roof": self.mean_epe_roof,
            "mean_epe_footprint": self.mean_epe_footprint,
            "ale": self.ale,
            "instances": self.instances,
            "pooling": self.pooling,
            "centroid_mode": self.centroid_mode,
        }


def confusion(pred: RasterMask, gt: RasterMask) -> PixelConfusion:
    """Per-pixel confusion counts of two equal-size binary masks."""
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise ValueError(
            f"mask dimensions differ: {pred.width}x{pred.height} vs {gt.width}x{gt.height}"
        )
    p = pred.pixels.astype(bool)
    g = gt.pixels.astype(bool)
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    tn = int((~p & ~g).sum())
    return PixelConfusion(tp, fp, fn, tn)


def scores(c: PixelConfusion) -> MaskScores:
    """Precision/recall/F1/IoU with explicit empty-case conventions.

    Empty-vs-empty is vacuously perfect overlap (IoU 1); any score whose
    denominator vanishes otherwise is 0.
    """
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    if c.tp + c.fp + c.fn > 0:
        iou = c.tp / (c.tp + c.fp + c.fn)
    else:
        iou = 1.0
    return MaskScores(f1, precision, recall, iou)


def epe(pred: Polygon, gt: Polygon, centroid_mode: str = AREA) -> float:
    """Euclidean distance between the polygon centroids, in pixels."""
    cp = centroid(pred, centroid_mode)
    cg = centroid(gt, centroid_mode)
    return math.hypot(cp.x - cg.x, cp.y - cg.y)


def le(pred_o: OffsetVec, gt_o: OffsetVec) -> float:
    """Absolute difference of the roof-offset norms (direction-insensitive)."""
    return abs(gt_o.norm() - pred_o.norm())


def aggregate(per_instance: list[InstanceEval], roof_confusion: PixelConfusion,
              footprint_confusion: PixelConfusion, centroid_mode: str = AREA) -> Report:
    """Fold pooled confusions and instance errors into a report."""
    if not per_instance:
        raise ValueError("no instances to aggregate")
    roof = scores(roof_confusion)
    footprint = scores(footprint_confusion)
    return Report(
        roof=roof,
        footprint=footprint,
        mf=(roof.f1 + footprint.f1) / 2.0,
        mi=(roof.iou + footprint.iou) / 2.0,
        mean_epe_roof=float(np.mean([e.epe_roof for e in per_instance])),
        mean_epe_footprint=float(np.mean([e.epe_footprint for e in per_instance])),
        ale=float(np.mean([e.le for e in per_instance])),
        instances=len(per_instance),
        centroid_mode=centroid_mode,
    )


def _union_mask(polys: list[Polygon], width: int, height: int) -> RasterMask:
    acc = np.zeros((height, width), dtype=np.uint8)
    for poly in polys:
        acc |= rasterize(poly, width, height).pixels
    return RasterMask(width, height, acc)


def evaluate(records: list[AnnotationRecord], preds: list[PredictionRecord],
             image_sizes: dict[int, tuple[int, int]], centroid_mode: str = AREA) -> Report:
    """Score a prediction set against its dataset (ids already aligned 1:1)."""
    if len(records) != len(preds):
        raise ValueError(f"{len(records)} records vs {len(preds)} predictions")
    by_image: dict[int, list[tuple[AnnotationRecord, PredictionRecord]]] = {}
    per_instance = []
    for rec, pred in zip(records, preds):
        if rec.id != pred.id:
            raise ValueError(f"record/prediction id mismatch: {rec.id} vs {pred.id}")
        by_image.setdefault(rec.image_id, []).append((rec, pred))
        per_instance.append(InstanceEval(
            record_id=rec.id,
            epe_roof=epe(pred.roof, rec.roof, centroid_mode),
            epe_footprint=epe(pred.footprint, rec.footprint, centroid_mode),
            le=le(pred.o_hat, rec.o_vec),
        ))
    roof_conf = PixelConfusion()
    foot_conf = PixelConfusion()
    for image_id in sorted(by_image):
        width, height = image_sizes[image_id]
        pairs = by_image[image_id]
        roof_conf = roof_conf.merged(confusion(
            _union_mask([p.roof for _, p in pairs], width, height),
            _union_mask([r.roof for r, _ in pairs], width, height)))
        foot_conf = foot_conf.merged(confusion(
            _union_mask([p.footprint for _, p in pairs], width, height),
            _union_mask([r.footprint for r, _ in pairs], width, height)))
    return aggregate(per_instance, roof_conf, foot_conf, centroid_mode)
