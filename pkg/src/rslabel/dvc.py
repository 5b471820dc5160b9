"""Fixed-length per-batch vocabulary assembly: every ground-truth category of
the batch goes in first, then uniformly sampled negatives fill the remainder
up to the configured capacity."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .core import canonicalize_category

DEFAULT_CAPACITY = 60


class PositivesExceedCapacityError(ValueError):
    """More positive categories than the batch can hold."""


class UnknownPositiveError(ValueError):
    """A positive category is not in the registry."""


@dataclass(frozen=True)
class VocabRegistry:
    """Ordered base vocabulary with dense category -> index lookup."""

    categories: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        lookup = {}
        for i, c in enumerate(self.categories):
            canon = canonicalize_category(c)
            if canon in lookup:
                raise ValueError(f"duplicate registry category: {c!r}")
            lookup[canon] = i
        object.__setattr__(self, "_lookup", lookup)

    def __len__(self) -> int:
        return len(self.categories)

    def index(self, category: str) -> int:
        return self._lookup[canonicalize_category(category)]

    def __contains__(self, category: str) -> bool:
        return canonicalize_category(category) in self._lookup


@dataclass(frozen=True)
class VocabBatch:
    """One batch vocabulary: positives first, then sampled negatives."""

    entries: tuple[str, ...]
    positive_count: int

    @property
    def positives(self) -> tuple[str, ...]:
        return self.entries[: self.positive_count]

    @property
    def negatives(self) -> tuple[str, ...]:
        return self.entries[self.positive_count :]


def build_batch(
    registry: VocabRegistry,
    positives: set[str],
    n_dv: int = DEFAULT_CAPACITY,
    seed: int = 0,
) -> VocabBatch:
    """Build one batch vocabulary of exactly min(len(registry), n_dv) entries.

    Positives come first (in registry order, so a positive set hashes to a
    deterministic batch); negatives are drawn uniformly without replacement
    from the rest of the registry under the given seed. When the whole
    registry fits, it is used as-is with no padding.
    """
    pos_idx = []
    for c in positives:
        try:
            pos_idx.append(registry.index(c))
        except KeyError as exc:
            raise UnknownPositiveError(f"positive {c!r} not in registry") from exc
    pos_idx.sort()
    if len(pos_idx) > n_dv:
        raise PositivesExceedCapacityError(
            f"{len(pos_idx)} positives exceed batch capacity {n_dv}"
        )

    ordered_pos = [registry.categories[i] for i in pos_idx]
    pos_set = set(pos_idx)
    candidates = [c for i, c in enumerate(registry.categories) if i not in pos_set]

    if len(registry) <= n_dv:
        # Whole registry fits: no sampling, but positives still lead.
        return VocabBatch(
            entries=tuple(ordered_pos) + tuple(candidates),
            positive_count=len(ordered_pos),
        )


    rng = random.Random(seed)
    negatives = rng.sample(candidates, n_dv - len(ordered_pos))
    return VocabBatch(
        entries=tuple(ordered_pos) + tuple(negatives),
        positive_count=len(ordered_pos),
    )
