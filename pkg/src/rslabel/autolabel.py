"""Semi-automated labeling drivers: a region-proposal service client, a
region-naming service client, and the rule-based filter that turns their
combined output into instances.

Both services speak JSON over HTTP. Transient failures are retried with
bounded exponential backoff; an item that keeps failing is reported as a
per-item failure and never aborts the batch.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import requests

from .core import BBox, Instance, canonicalize_category
from .formats import AutoLabelRecord, RoiProposal, parse_lvlm_record

# Prompt sent verbatim to the naming service for every cropped region.
NAMING_PROMPT = (
    'Tell me the possible object category in the remote sensing image by '
    'returning a "object category" phrase surrounded by quotation marks and '
    'given a likelihood from 0 to 1 "object category" with likelihood, if it '
    'is not recognized, output "Unrecognized" and providing reasoning details.'
)

ENV_SAM_ENDPOINT = "LAE_SAM_ENDPOINT"
ENV_LVLM_ENDPOINT = "LAE_LVLM_ENDPOINT"
ENV_LVLM_API_KEY = "LAE_LVLM_API_KEY"


class ServiceUnreachableError(RuntimeError):
    """All retries against a service endpoint failed."""


class MalformedResponseError(ValueError):
    """The service answered but not with the documented JSON shape."""


@dataclass(frozen=True)
class ProposalConfig:
    points_per_image: int = 32
    pred_iou_threshold: float = 0.86
    stability_threshold: float = 0.92
    downsample_factor: int = 2
    top_k_large: int = 10
    top_k_small: int = 5
    small_image_cutoff: int = 600

    def __post_init__(self):
        for name in ("pred_iou_threshold", "stability_threshold"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} out of [0,1]: {v}")
        if self.top_k_large < 1 or self.top_k_small < 1:
            raise ValueError("top_k values must be >= 1")


@dataclass(frozen=True)
class FilterPolicy:
    min_likelihood: float = 0.5
    monotone_std_threshold: float = 5.0
    category_blocklist: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not (0.0 <= self.min_likelihood <= 1.0):
            raise ValueError(f"min_likelihood out of [0,1]: {self.min_likelihood}")
        if self.monotone_std_threshold < 0:
            raise ValueError("monotone_std_threshold must be >= 0")
        object.__setattr__(
            self,
            "category_blocklist",
            frozenset(canonicalize_category(c) for c in self.category_blocklist),
        )


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    base_delay: float = 0.05
    max_delay: float = 2.0


def _post_with_retry(url: str, payload: dict, retry: RetryPolicy, headers=None) -> dict:
    last_exc = None
    for attempt in range(retry.max_attempts):
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=30)
            if resp.status_code >= 500 or resp.status_code == 429:
                last_exc = ServiceUnreachableError(
                    f"{url}: HTTP {resp.status_code}"
                )
            elif resp.status_code != 200:
                raise MalformedResponseError(f"{url}: HTTP {resp.status_code}")
            else:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise MalformedResponseError(f"{url}: non-JSON body") from exc
        except requests.RequestException as exc:
            last_exc = exc
        if attempt < retry.max_attempts - 1:
            time.sleep(min(retry.base_delay * (2**attempt), retry.max_delay))
    raise ServiceUnreachableError(f"{url}: retries exhausted") from last_exc


def _top_k_by_area(proposals: list[RoiProposal], k: int) -> list[RoiProposal]:
    # Stable under area ties: larger area first, then proposal id ascending.
    ranked = sorted(proposals, key=lambda p: (-p.area, p.id))
    return ranked[:k]


def request_proposals(
    image_uri: str,
    cfg: ProposalConfig,
    endpoint: str,
    image_size: tuple[int, int] | None = None,
    retry: RetryPolicy = RetryPolicy(),
) -> list[RoiProposal]:
    """Fetch region proposals for one image, apply the quality thresholds
    client-side, and truncate to the top-K by area (K depends on whether
    the image counts as small)."""
    doc = _post_with_retry(
        endpoint,
        {
            "image_uri": image_uri,
            "points": cfg.points_per_image,
            "iou_threshold": cfg.pred_iou_threshold,
            "stability_threshold": cfg.stability_threshold,
            "downsample": cfg.downsample_factor,
        },
        retry,
    )
    if "proposals" not in doc or not isinstance(doc["proposals"], list):
        raise MalformedResponseError(f"{endpoint}: missing proposals list")
    proposals = []
    for row in doc["proposals"]:
        try:
            proposals.append(
                RoiProposal(
                    id=int(row["id"]),
                    area=int(row["area"]),
                    bbox=BBox(*(float(v) for v in row["bbox"])),
                    point_input_x=float(row["point_input_x"]),
                    point_input_y=float(row["point_input_y"]),
                    predicted_iou=float(row["predicted_iou"]),
                    stability_score=float(row["stability_score"]),
                    crop_box=BBox(*(float(v) for v in row["crop_box"])),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponseError(f"{endpoint}: bad proposal row: {exc}") from exc
    kept = [
        p
        for p in proposals
        if p.predicted_iou >= cfg.pred_iou_threshold
        and p.stability_score >= cfg.stability_threshold
    ]
    if image_size is not None and min(image_size) < cfg.small_image_cutoff:
        k = cfg.top_k_small
    else:
        k = cfg.top_k_large
    return _top_k_by_area(kept, k)


def request_category(
    crop_uri: str,
    endpoint: str,
    api_key: str | None = None,
    retry: RetryPolicy = RetryPolicy(),
) -> AutoLabelRecord:
    """Ask the naming service for the category of one cropped region."""
    headers = {"Authorization": f"Bearer {api_key}"} if api_key else None
    doc = _post_with_retry(
        endpoint, {"image_uri": crop_uri, "prompt": NAMING_PROMPT}, retry, headers
    )
    if "text" not in doc or not isinstance(doc["text"], str):
        raise MalformedResponseError(f"{endpoint}: missing text field")
    return parse_lvlm_record(doc["text"], det_name=crop_uri)


def rule_filter(
    records: list[tuple[RoiProposal, AutoLabelRecord]],
    policy: FilterPolicy,
    crop_stats: dict | None = None,
) -> list[Instance]:
    """Rule-based culling of the proposal/naming pairs.

    Drops unrecognized or unparseable records, likelihoods missing or below
    the floor, blocklisted categories, and monotone crops (pixel stddev
    below the threshold when a stat is available for the crop).
    Survivors become instances carrying the proposal box.
    """
    crop_stats = crop_stats or {}
    out = []
    for proposal, record in records:
        if record.unparseable or record.unrecognized:
            continue
        if record.likelihood is None or record.likelihood < policy.min_likelihood:
            continue
        category = canonicalize_category(record.category)
        if category in policy.category_blocklist:
            continue
        std = crop_stats.get(record.det_name)
        if std is not None and std < policy.monotone_std_threshold:
            continue
        out.append(
            Instance(
                box=proposal.bbox,
                category=category,
                source_id=record.det_name,
                likelihood=record.likelihood,
            )
        )
    return out


@dataclass(frozen=True)
class ImageResult:
    """Outcome of the labeling pipeline for one input image."""

    image_uri: str
    instances: tuple[Instance, ...] = ()
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def _crop_uri(image_uri: str, proposal: RoiProposal) -> str:
    b = proposal.bbox
    return f"{image_uri}#crop_{proposal.id}_{b.x:g}_{b.y:g}_{b.w:g}_{b.h:g}"


def label_image(
    image_uri: str,
    image_size: tuple[int, int] | None,
    cfg: ProposalConfig,
    policy: FilterPolicy,
    sam_endpoint: str,
    lvlm_endpoint: str,
    api_key: str | None = None,
    crop_stats: dict | None = None,
    retry: RetryPolicy = RetryPolicy(),
) -> ImageResult:
    """Full coarse-labeling path for one image: proposals, naming, filter.

    Failures are captured in the result, not raised."""
    try:
        proposals = request_proposals(
            image_uri, cfg, sam_endpoint, image_size=image_size, retry=retry
        )
        pairs = []
        for p in proposals:
            record = request_category(
                _crop_uri(image_uri, p), lvlm_endpoint, api_key=api_key, retry=retry
            )
            pairs.append((p, record))
        return ImageResult(
            image_uri=image_uri,
            instances=tuple(rule_filter(pairs, policy, crop_stats)),
        )
    except (ServiceUnreachableError, MalformedResponseError) as exc:
        return ImageResult(image_uri=image_uri, error=str(exc))


def label_batch(
    images: list[tuple[str, tuple[int, int] | None]],
    cfg: ProposalConfig,
    policy: FilterPolicy,
    sam_endpoint: str,
    lvlm_endpoint: str,
    api_key: str | None = None,
    crop_stats: dict | None = None,
    workers: int = 8,
    retry: RetryPolicy = RetryPolicy(),
) -> list[ImageResult]:
    """Label a batch of (image_uri, image_size) pairs with bounded
    concurrency. Results come back in input order regardless of completion
    order; per-image failures are isolated."""
    def run(item):
        uri, size = item
        return label_image(
            uri, size, cfg, policy, sam_endpoint, lvlm_endpoint,
            api_key=api_key, crop_stats=crop_stats, retry=retry,
        )

    if workers <= 1:
        return [run(item) for item in images]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, images))


def endpoints_from_env() -> tuple[str | None, str | None, str | None]:
    return (
        os.environ.get(ENV_SAM_ENDPOINT),
        os.environ.get(ENV_LVLM_ENDPOINT),
        os.environ.get(ENV_LVLM_API_KEY),
    )
