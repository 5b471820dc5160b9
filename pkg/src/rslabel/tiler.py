"""Slice oversized images into fixed-size tiles and remap annotations.

Tiles advance by an integer stride derived from the overlap ratio; the last
tile on each axis is clamped so it touches the image boundary instead of
producing a partial tile. Instances clipped by a tile edge keep their
source_id so overlap duplicates can be counted exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import BBox, ImageRecord, Instance


@dataclass(frozen=True)
class TileSpec:
    tile_size: int
    overlap_ratio: float = 0.2
    min_visibility: float = 0.25

    def __post_init__(self):
        if self.tile_size <= 0:
            raise ValueError(f"tile_size must be positive: {self.tile_size}")
        if not (0.0 <= self.overlap_ratio < 1.0):
            raise ValueError(f"overlap_ratio out of [0,1): {self.overlap_ratio}")
        if not (0.0 < self.min_visibility <= 1.0):
            raise ValueError(f"min_visibility out of (0,1]: {self.min_visibility}")
        if self.stride < 1:
            raise ValueError(f"stride collapses to 0 for {self!r}")

    @property
    def stride(self) -> int:
        return math.floor(self.tile_size * (1.0 - self.overlap_ratio))


@dataclass(frozen=True)
class Tile:
    parent_image_id: str
    origin_x: int
    origin_y: int
    width: int
    height: int
    instances: tuple[Instance, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))


def _axis_origins(length: int, spec: TileSpec) -> list[int]:
    if length <= spec.tile_size:
        return [0]
    last = length - spec.tile_size
    origins = list(range(0, last + 1, spec.stride))
    if origins[-1] != last:
        origins.append(last)
    return origins


def plan_tiles(image_w: int, image_h: int, spec: TileSpec) -> list[tuple[int, int]]:
    """Row-major tile origins covering the full image."""
    if image_w <= 0 or image_h <= 0:
        raise ValueError(f"image dimensions must be positive: {image_w}x{image_h}")
    xs = _axis_origins(image_w, spec)
    ys = _axis_origins(image_h, spec)
    return [(x, y) for y in ys for x in xs]


def _clip_to_tile(box: BBox, ox: int, oy: int, tw: int, th: int) -> BBox | None:
    x1 = max(box.x, ox)
    y1 = max(box.y, oy)
    x2 = min(box.x2, ox + tw)
    y2 = min(box.y2, oy + th)
    if x2 <= x1 or y2 <= y1:
        return None
    return BBox(x1 - ox, y1 - oy, x2 - x1, y2 - y1)


def slice_image(rec: ImageRecord, spec: TileSpec) -> list[Tile]:
    """Slice one image record into tiles with translated, clipped instances.

    An instance lands in a tile only when its visible fraction of area there
    is at least spec.min_visibility.
    """
    tiles = []
    for ox, oy in plan_tiles(rec.width, rec.height, spec):
        tw = min(spec.tile_size, rec.width - ox)
        th = min(spec.tile_size, rec.height - oy)
        kept = []
        for inst in rec.instances:
            if inst.box.area <= 0:
                continue
            local = _clip_to_tile(inst.box, ox, oy, tw, th)
            if local is None:
                continue
            if local.area / inst.box.area < spec.min_visibility:
                continue
            kept.append(
                Instance(
                    box=local,
                    category=inst.category,
                    source_id=inst.source_id,
                    likelihood=inst.likelihood,
                )
            )
        tiles.append(
            Tile(
                parent_image_id=rec.image_id,
                origin_x=ox,
                origin_y=oy,
                width=tw,
                height=th,
                instances=tuple(kept),
            )
        )
    return tiles


def dedup_instances(tiles: list[Tile]) -> int:
    """Distinct instance count across tiles, collapsing overlap duplicates
    that share a source_id."""
    return len({inst.source_id for t in tiles for inst in t.instances})
