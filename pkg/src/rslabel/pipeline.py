"""Dataset-level transformations: class-preserving sampling, over-dense
annotation splitting, manifest merging, and benchmark assembly."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .core import DatasetManifest, ImageRecord, canonicalize_category


@dataclass(frozen=True)
class SamplePolicy:
    rate: float
    threshold: int = 100
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.rate <= 1.0):
            raise ValueError(f"rate out of (0,1]: {self.rate}")
        if self.threshold < 0:
            raise ValueError(f"negative threshold: {self.threshold}")


@dataclass(frozen=True)
class BenchmarkSelection:
    source_dataset: str
    selected_categories: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "selected_categories", tuple(self.selected_categories))
        canon = [canonicalize_category(c) for c in self.selected_categories]
        if len(set(canon)) != len(canon):
            raise ValueError(
                f"duplicate categories in selection for {self.source_dataset!r}"
            )


class MissingCategoryError(ValueError):
    """A selected category does not exist in its source pool."""


class DuplicateCategoryError(ValueError):
    """The same category is selected from two different sources."""


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def sample_by_class(m: DatasetManifest, p: SamplePolicy) -> DatasetManifest:
    """Thin over-represented classes: any category with more than p.threshold
    instances keeps exactly round(count * p.rate) of them, chosen uniformly
    without replacement under p.seed. Smaller classes pass through untouched.
    Images left with no instances are retained with empty lists.
    """
    counts = m.instances_by_category()
    # Global index of every instance per category, in stored order.
    positions: dict[str, list[tuple[int, int]]] = {}
    for img_idx, rec in enumerate(m.images):
        for inst_idx, inst in enumerate(rec.instances):
            positions.setdefault(inst.category, []).append((img_idx, inst_idx))

    rng = random.Random(p.seed)
    keep: set[tuple[int, int]] = set()
    for category in m.categories:
        locs = positions.get(category, [])
        count = counts.get(category, 0)
        if count > p.threshold:
            survivors = _round_half_away(count * p.rate)
            keep.update(rng.sample(locs, survivors))
        else:
            keep.update(locs)

    images = []
    for img_idx, rec in enumerate(m.images):
        kept = tuple(
            inst
            for inst_idx, inst in enumerate(rec.instances)
            if (img_idx, inst_idx) in keep
        )
        images.append(rec.with_instances(kept))
    return DatasetManifest(name=m.name, categories=m.categories, images=tuple(images))


def split_dense(rec: ImageRecord, cap: int) -> list[ImageRecord]:
    """Split an over-dense image record into greedy chunks of at most cap
    instances; the instance multiset is preserved exactly. Records at or
    below the cap come back unchanged."""
    if cap <= 0:
        raise ValueError(f"cap must be positive: {cap}")
    if len(rec.instances) <= cap:
        return [rec]
    chunks = []
    for ordinal, start in enumerate(range(0, len(rec.instances), cap)):
        chunk = rec.instances[start : start + cap]
        chunks.append(
            ImageRecord(
                image_id=f"{rec.image_id}#{ordinal}",
                width=rec.width,
                height=rec.height,
                uri=rec.uri,
                instances=chunk,
            )
        )
    return chunks


def merge_manifests(
    ms: list[DatasetManifest], dedup: bool = False, name: str = "merged"
) -> DatasetManifest:
    """Union several manifests: categories unioned after canonicalization,
    image ids namespaced by source manifest name; with dedup, instances
    sharing a source_id collapse to their first occurrence."""
    categories: list[str] = []
    seen_cats: set[str] = set()
    for m in ms:
        for c in m.categories:
            canon = canonicalize_category(c)
            if canon not in seen_cats:
                seen_cats.add(canon)
                categories.append(canon)

    images = []
    seen_sources: set[str] = set()
    used_ids: set[str] = set()
    for m in ms:
        for rec in m.images:
            instances = rec.instances
            if dedup:
                kept = []
                for inst in instances:
                    if inst.source_id in seen_sources:
                        continue
                    seen_sources.add(inst.source_id)
                    kept.append(inst)
                instances = tuple(kept)
            image_id = f"{m.name}/{rec.image_id}"
            suffix = 2
            while image_id in used_ids:
                image_id = f"{m.name}/{rec.image_id}#{suffix}"
                suffix += 1
            used_ids.add(image_id)
            images.append(
                ImageRecord(
                    image_id=image_id,
                    width=rec.width,
                    height=rec.height,
                    uri=rec.uri,
                    instances=instances,
                )
            )
    return DatasetManifest(name=name, categories=tuple(categories), images=tuple(images))


def assemble_benchmark(
    selections: list[BenchmarkSelection],
    pools: list[DatasetManifest],
    name: str = "benchmark",
) -> DatasetManifest:
    """Assemble an evaluation benchmark: concatenate the per-source category
    selections (with a global duplicate check) and keep only instances of
    selected categories from each source pool."""
    pool_by_name = {m.name: m for m in pools}

    categories: list[str] = []
    seen: set[str] = set()
    for sel in selections:
        if sel.source_dataset not in pool_by_name:
            raise MissingCategoryError(f"no pool named {sel.source_dataset!r}")
        pool_cats = {canonicalize_category(c) for c in pool_by_name[sel.source_dataset].categories}
        for c in sel.selected_categories:
            canon = canonicalize_category(c)
            if canon not in pool_cats:
                raise MissingCategoryError(
                    f"category {c!r} not in pool {sel.source_dataset!r}"
                )
            if canon in seen:
                raise DuplicateCategoryError(
                    f"category {c!r} selected from more than one source"
                )
            seen.add(canon)
            categories.append(canon)

    images = []
    for sel in selections:
        pool = pool_by_name[sel.source_dataset]
        wanted = {canonicalize_category(c) for c in sel.selected_categories}
        for rec in pool.images:
            kept = tuple(i for i in rec.instances if i.category in wanted)
            images.append(
                ImageRecord(
                    image_id=f"{pool.name}/{rec.image_id}",
                    width=rec.width,
                    height=rec.height,
                    uri=rec.uri,
                    instances=kept,
                )
            )
    return DatasetManifest(name=name, categories=tuple(categories), images=tuple(images))
