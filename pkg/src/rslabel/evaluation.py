"""Detection evaluation: greedy IoU matching, precision-recall curves, and
COCO-style AP (101-point interpolation over IoU thresholds 0.50:0.05:0.95).

Equal-score detections are ordered by (image_id, box coordinates) so the
result is invariant to input permutation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import BBox, DatasetManifest, Instance, UnknownCategoryError, canonicalize_category, iou

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
MAX_DETS_PER_IMAGE = 100


@dataclass(frozen=True)
class ScoredDetection:
    image_id: str
    category: str
    box: BBox
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score out of [0,1]: {self.score}")


@dataclass(frozen=True)
class EvalReport:
    per_category: dict  # category -> {iou threshold -> AP}
    ap50: float
    ap75: float
    map: float

    def to_json(self) -> str:
        doc = {
            "ap50": self.ap50,
            "ap75": self.ap75,
            "map": self.map,
            "per_category": {
                cat: {f"{thr:.2f}": ap for thr, ap in sorted(aps.items())}
                for cat, aps in sorted(self.per_category.items())
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        """Aligned plain-text summary table."""
        lines = []
        width = max([len("category")] + [len(c) for c in self.per_category])
        lines.append(f"{'category':<{width}}  {'AP50':>7}  {'AP75':>7}  {'mAP':>7}")
        for cat in sorted(self.per_category):
            aps = self.per_category[cat]
            cat_map = sum(aps.values()) / len(aps)
            lines.append(
                f"{cat:<{width}}  {aps[0.5]:>7.4f}  {aps[0.75]:>7.4f}  {cat_map:>7.4f}"
            )
        lines.append(
            f"{'ALL':<{width}}  {self.ap50:>7.4f}  {self.ap75:>7.4f}  {self.map:>7.4f}"
        )
        return "\n".join(lines) + "\n"


def _det_order_key(d: ScoredDetection):
    return (-d.score, d.image_id, d.box.x, d.box.y, d.box.w, d.box.h)


def match_greedy(
    dets: list[ScoredDetection], gts: list[Instance], iou_thr: float
) -> list[tuple[int, int | None]]:
    """Greedy matching within one image and category.

    Detections are visited by descending score; each claims the unclaimed
    ground truth of highest IoU >= iou_thr (ties by gt index ascending).
    Returns (original det index, gt index or None) pairs in visit order.
    """
    if not (0.0 < iou_thr <= 1.0):
        raise ValueError(f"iou_thr out of (0,1]: {iou_thr}")
    order = sorted(range(len(dets)), key=lambda i: _det_order_key(dets[i]))
    claimed = set()
    result = []
    for di in order:
        best_gt = None
        best_iou = iou_thr
        for gi, gt in enumerate(gts):
            if gi in claimed:
                continue
            v = iou(dets[di].box, gt.box)
            if v > best_iou or (v == best_iou and best_gt is None and v >= iou_thr):
                best_iou = v
                best_gt = gi
        if best_gt is not None:
            claimed.add(best_gt)
        result.append((di, best_gt))
    return result


def _tp_flags(dets: list[ScoredDetection], gts_by_image: dict, iou_thr: float):
    """Global (score-ordered) TP flags for one category across images."""
    by_image: dict[str, list[tuple[int, ScoredDetection]]] = {}
    for i, d in enumerate(dets):
        by_image.setdefault(d.image_id, []).append((i, d))

    tp = {}
    for image_id, pairs in by_image.items():
        pairs.sort(key=lambda p: _det_order_key(p[1]))
        pairs = pairs[:MAX_DETS_PER_IMAGE]
        local = [p[1] for p in pairs]
        matches = match_greedy(local, gts_by_image.get(image_id, []), iou_thr)
        for (li, gi) in matches:
            tp[pairs[li][0]] = gi is not None

    order = sorted(tp, key=lambda i: _det_order_key(dets[i]))
    return [tp[i] for i in order]


def _interp_ap(recalls: np.ndarray, precisions: np.ndarray, points: int) -> float:
    samples = np.linspace(0.0, 1.0, points)
    ap = 0.0
    for r in samples:
        mask = recalls >= r
        ap += precisions[mask].max() if mask.any() else 0.0
    return ap / points


def pr_curve(
    dets: list[ScoredDetection], gts_by_image: dict, iou_thr: float
) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative recall/precision arrays for one category, score-ordered."""
    n_gt = sum(len(v) for v in gts_by_image.values())
    flags = _tp_flags(dets, gts_by_image, iou_thr)
    if not flags:
        return np.zeros(0), np.zeros(0)
    tp_cum = np.cumsum(np.asarray(flags, dtype=np.float64))
    ranks = np.arange(1, len(flags) + 1, dtype=np.float64)
    precision = tp_cum / ranks
    recall = tp_cum / n_gt if n_gt > 0 else np.zeros_like(tp_cum)
    return recall, precision


def average_precision(
    dets: list[ScoredDetection],
    gts_by_image: dict,
    iou_thr: float,
    interpolation: str = "101",
) -> float:
    """AP for one category; 101-point interpolated by default, VOC-style
    11-point behind the flag. No ground truths and no detections gives 0."""
    n_gt = sum(len(v) for v in gts_by_image.values())
    recall, precision = pr_curve(dets, gts_by_image, iou_thr)
    if n_gt == 0 or recall.size == 0:
        return 0.0
    points = {"101": 101, "11": 11}[interpolation]
    return _interp_ap(recall, precision, points)


def evaluate(
    dets: list[ScoredDetection],
    benchmark: DatasetManifest,
    thresholds=IOU_THRESHOLDS,
    interpolation: str = "101",
) -> EvalReport:
    """Per-category AP at every IoU threshold; ap50/ap75 are means over
    categories at the fixed threshold, map the grand mean. Categories with
    neither ground truths nor detections are excluded from the means."""
    known = set(benchmark.categories)
    dets_by_cat: dict[str, list[ScoredDetection]] = {}
    for d in dets:
        canon = canonicalize_category(d.category)
        if canon not in known:
            raise UnknownCategoryError(f"detection category {d.category!r} not in benchmark")
        dets_by_cat.setdefault(canon, []).append(d)

    gts_by_cat: dict[str, dict[str, list[Instance]]] = {}
    for rec in benchmark.images:
        for inst in rec.instances:
            gts_by_cat.setdefault(inst.category, {}).setdefault(rec.image_id, []).append(inst)

    per_category = {}
    for cat in benchmark.categories:
        cat_dets = dets_by_cat.get(cat, [])
        cat_gts = gts_by_cat.get(cat, {})
        if not cat_dets and not cat_gts:
            continue
        per_category[cat] = {
            thr: average_precision(cat_dets, cat_gts, thr, interpolation)
            for thr in thresholds
        }

    if not per_category:
        return EvalReport(per_category={}, ap50=0.0, ap75=0.0, map=0.0)
    cats = list(per_category)
    ap50 = sum(per_category[c][0.5] for c in cats) / len(cats)
    ap75 = sum(per_category[c][0.75] for c in cats) / len(cats)
    grand = sum(ap for c in cats for ap in per_category[c].values()) / (
        len(cats) * len(thresholds)
    )
    return EvalReport(per_category=per_category, ap50=ap50, ap75=ap75, map=grand)


# -- detections IO -----------------------------------------------------------


def read_detections(data: bytes) -> list[ScoredDetection]:
    """JSON-lines of {image_id, category, bbox: [x, y, w, h], score}."""
    dets = []
    for line in data.decode("utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        x, y, w, h = row["bbox"]
        dets.append(
            ScoredDetection(
                image_id=str(row["image_id"]),
                category=str(row["category"]),
                box=BBox(float(x), float(y), float(w), float(h)),
                score=float(row["score"]),
            )
        )
    return dets


def write_detections(dets: list[ScoredDetection]) -> bytes:
    lines = [
        json.dumps(
            {
                "image_id": d.image_id,
                "category": d.category,
                "bbox": [d.box.x, d.box.y, d.box.w, d.box.h],
                "score": d.score,
            },
            sort_keys=True,
        )
        for d in dets
    ]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""
