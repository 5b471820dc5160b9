"""Canonical domain types and box geometry shared by the whole toolchain.

Boxes are stored as (x, y, w, h) in continuous pixel units with a top-left
origin, matching the COCO-style storage every dataset is unified to.
Corner-form conversion is internal to the geometry helpers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace


class InvalidCategoryError(ValueError):
    """Category string is empty after canonicalization."""


class DegenerateBoxError(ValueError):
    """Both boxes have zero area where at least one positive area is required."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left corner plus width/height, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for v in (self.x, self.y, self.w, self.h):
            if not _finite(v):
                raise ValueError(f"non-finite box coordinate: {self!r}")
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative box extent: {self!r}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h


def _finite(v: float) -> bool:
    return v == v and v not in (float("inf"), float("-inf"))


def _intersection_area(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def _edge_area(b: BBox) -> float:
    # Computed from the same corner values used for intersections so that
    # identical boxes compare exactly (iou(a, a) == 1.0 even when w * h and
    # (x2 - x) * (y2 - y) round differently).
    return (b.x2 - b.x) * (b.y2 - b.y)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when the union is empty."""
    inter = _intersection_area(a, b)
    union = _edge_area(a) + _edge_area(b) - inter
    if union <= 0:
        return 0.0
    return inter / union


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU: IoU minus the normalized slack of the enclosing box.

    Ranges over [-1, 1]; raises DegenerateBoxError when both boxes have zero
    area (the enclosing box is then meaningless).
    """
    if a.area == 0 and b.area == 0:
        raise DegenerateBoxError("giou undefined for two zero-area boxes")
    inter = _intersection_area(a, b)
    union = _edge_area(a) + _edge_area(b) - inter
    ew = max(a.x2, b.x2) - min(a.x, b.x)
    eh = max(a.y2, b.y2) - min(a.y, b.y)
    enclose = ew * eh
    iou_val = inter / union if union > 0 else 0.0
    if enclose <= 0:
        return iou_val
    return iou_val - (enclose - union) / enclose


_WS = re.compile(r"\s+")


def canonicalize_category(raw: str) -> str:
    """Normalize a category name: trim, strip surrounding quotes, lowercase,
    collapse internal whitespace.

    Idempotent. Raises InvalidCategoryError when nothing is left.
    """
    s = raw.strip()
    while len(s) >= 2 and s[0] in "\"'" and s[-1] == s[0]:
        s = s[1:-1].strip()
    s = _WS.sub(" ", s).lower().strip()
    if not s:
        raise InvalidCategoryError(f"category empty after canonicalization: {raw!r}")
    return s


@dataclass(frozen=True)
class Instance:
    """One annotated object: box, canonical category, provenance."""

    box: BBox
    category: str
    source_id: str
    likelihood: float | None = None

    def __post_init__(self):
        if not self.category:
            raise InvalidCategoryError("instance category must be non-empty")
        if self.likelihood is not None and not (0.0 <= self.likelihood <= 1.0):
            raise ValueError(f"likelihood out of [0,1]: {self.likelihood}")


@dataclass(frozen=True)
class ImageRecord:
    """An image plus its instances; pixel data is referenced by URI only."""

    image_id: str
    width: int
    height: int
    uri: str
    instances: tuple[Instance, ...] = ()

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"image {self.image_id!r}: non-positive dimensions "
                f"{self.width}x{self.height}"
            )
        object.__setattr__(self, "instances", tuple(self.instances))
        extent = BBox(0, 0, float(self.width), float(self.height))
        for inst in self.instances:
            if _intersection_area(inst.box, extent) <= 0 and inst.box.area > 0:
                raise ValueError(
                    f"image {self.image_id!r}: instance box {inst.box} outside extent"
                )

    def with_instances(self, instances) -> "ImageRecord":
        return replace(self, instances=tuple(instances))


class UnknownCategoryError(ValueError):
    """An instance references a category absent from the manifest vocabulary."""


@dataclass(frozen=True)
class DatasetManifest:
    """A dataset: ordered category vocabulary plus image records."""

    name: str
    categories: tuple[str, ...]
    images: tuple[ImageRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "images", tuple(self.images))
        seen = set()
        for c in self.categories:
            canon = canonicalize_category(c)
            if canon in seen:
                raise ValueError(f"duplicate category after canonicalization: {c!r}")
            seen.add(canon)
        ids = set()
        for rec in self.images:
            if rec.image_id in ids:
                raise ValueError(f"duplicate image id: {rec.image_id!r}")
            ids.add(rec.image_id)
            for inst in rec.instances:
                if canonicalize_category(inst.category) not in seen:
                    raise UnknownCategoryError(
                        f"instance category {inst.category!r} not in manifest "
                        f"{self.name!r} vocabulary"
                    )

    @property
    def instance_count(self) -> int:
        return sum(len(rec.instances) for rec in self.images)

    def instances_by_category(self) -> dict[str, int]:
        counts: dict[str, int] = {c: 0 for c in self.categories}
        for rec in self.images:
            for inst in rec.instances:
                counts[inst.category] += 1
        return counts
