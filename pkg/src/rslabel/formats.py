"""Codecs for the canonical dataset JSON, the proposal-service CSV, and the
region-naming record stream.

The canonical manifest is a COCO-style JSON subset (categories, images,
annotations) written deterministically: sorted keys, two-space indent,
category order preserved, shortest round-trip float formatting. read/write
is the identity, byte for byte, on canonical documents.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass

from .core import (
    BBox,
    DatasetManifest,
    ImageRecord,
    Instance,
    UnknownCategoryError,
    canonicalize_category,
)

SCHEMA_VERSION = 1


class ManifestFormatError(ValueError):
    """Input bytes are not a canonical manifest document."""


class ProposalFormatError(ValueError):
    """Proposal CSV header or row does not match the expected layout."""


PROPOSAL_HEADER = (
    "id",
    "area",
    "bbox_x0",
    "bbox_y0",
    "bbox_w",
    "bbox_h",
    "point_input_x",
    "point_input_y",
    "predicted_iou",
    "stability_score",
    "crop_box_x0",
    "crop_box_y0",
    "crop_box_w",
    "crop_box_h",
)


@dataclass(frozen=True)
class RoiProposal:
    """One region-of-interest row from the proposal service."""

    id: int
    area: int
    bbox: BBox
    point_input_x: float
    point_input_y: float
    predicted_iou: float
    stability_score: float
    crop_box: BBox

    def __post_init__(self):
        if self.area < 0:
            raise ValueError(f"negative proposal area: {self.area}")
        for name in ("predicted_iou", "stability_score"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} out of [0,1]: {v}")


@dataclass(frozen=True)
class AutoLabelRecord:
    """One region-naming result: raw text plus the parsed category/likelihood."""

    det_name: str
    raw_text: str
    category: str
    likelihood: float | None
    unrecognized: bool
    unparseable: bool = False


# -- canonical manifest ------------------------------------------------------


def manifest_to_doc(m: DatasetManifest) -> dict:
    cat_index = {c: i for i, c in enumerate(m.categories)}
    images = []
    annotations = []
    ann_id = 0
    for rec in m.images:
        images.append(
            {
                "id": rec.image_id,
                "width": rec.width,
                "height": rec.height,
                "file_name": rec.uri,
            }
        )
        for inst in rec.instances:
            ann = {
                "id": ann_id,
                "image_id": rec.image_id,
                "category_id": cat_index[canonicalize_category(inst.category)],
                "bbox": [float(v) for v in (inst.box.x, inst.box.y, inst.box.w, inst.box.h)],
                "source_id": inst.source_id,
            }
            if inst.likelihood is not None:
                ann["likelihood"] = float(inst.likelihood)
            annotations.append(ann)
            ann_id += 1
    return {
        "schema_version": SCHEMA_VERSION,
        "name": m.name,
        "categories": [{"id": i, "name": c} for i, c in enumerate(m.categories)],
        "images": images,
        "annotations": annotations,
    }


def write_manifest(m: DatasetManifest) -> bytes:
    doc = manifest_to_doc(m)
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8")


def read_manifest(data: bytes) -> DatasetManifest:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ManifestFormatError(f"malformed manifest JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ManifestFormatError("manifest root must be an object")
    try:
        categories = [canonicalize_category(c["name"]) for c in doc["categories"]]
        cat_by_id = {c["id"]: canonicalize_category(c["name"]) for c in doc["categories"]}
        by_image: dict[str, list[Instance]] = {}
        for ann in doc.get("annotations", []):
            cid = ann["category_id"]
            if cid not in cat_by_id:
                raise UnknownCategoryError(
                    f"annotation {ann.get('id')} references unknown category id {cid}"
                )
            x, y, w, h = ann["bbox"]
            inst = Instance(
                box=BBox(float(x), float(y), float(w), float(h)),
                category=cat_by_id[cid],
                source_id=str(ann["source_id"]),
                likelihood=ann.get("likelihood"),
            )
            by_image.setdefault(str(ann["image_id"]), []).append(inst)
        images = []
        for im in doc.get("images", []):
            width, height = int(im["width"]), int(im["height"])
            if width <= 0 or height <= 0:
                raise ManifestFormatError(
                    f"image {im.get('id')!r}: non-positive dimensions {width}x{height}"
                )
            images.append(
                ImageRecord(
                    image_id=str(im["id"]),
                    width=width,
                    height=height,
                    uri=str(im["file_name"]),
                    instances=tuple(by_image.get(str(im["id"]), [])),
                )
            )
        referenced = {img_id for img_id in by_image}
        known = {im.image_id for im in images}
        missing = referenced - known
        if missing:
            raise ManifestFormatError(f"annotations reference unknown images: {sorted(missing)}")
        return DatasetManifest(
            name=str(doc.get("name", "")),
            categories=tuple(categories),
            images=tuple(images),
        )
    except (KeyError, TypeError) as exc:
        raise ManifestFormatError(f"manifest missing required field: {exc}") from exc


# -- proposal CSV ------------------------------------------------------------


def _num(field: str, value: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise ProposalFormatError(f"non-numeric {field}: {value!r}") from exc


def parse_proposals(data: bytes) -> list[RoiProposal]:
    text = data.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows:
        raise ProposalFormatError("empty proposal CSV")
    header = tuple(c.strip() for c in rows[0])
    if header != PROPOSAL_HEADER:
        raise ProposalFormatError(
            f"proposal CSV header mismatch: expected {PROPOSAL_HEADER}, got {header}"
        )
    proposals = []
    for row in rows[1:]:
        if len(row) != len(PROPOSAL_HEADER):
            raise ProposalFormatError(
                f"proposal row has {len(row)} fields, expected {len(PROPOSAL_HEADER)}: {row}"
            )
        vals = dict(zip(PROPOSAL_HEADER, (v.strip() for v in row)))
        proposals.append(
            RoiProposal(
                id=int(_num("id", vals["id"])),
                area=int(_num("area", vals["area"])),
                bbox=BBox(
                    _num("bbox_x0", vals["bbox_x0"]),
                    _num("bbox_y0", vals["bbox_y0"]),
                    _num("bbox_w", vals["bbox_w"]),
                    _num("bbox_h", vals["bbox_h"]),
                ),
                point_input_x=_num("point_input_x", vals["point_input_x"]),
                point_input_y=_num("point_input_y", vals["point_input_y"]),
                predicted_iou=_num("predicted_iou", vals["predicted_iou"]),
                stability_score=_num("stability_score", vals["stability_score"]),
                crop_box=BBox(
                    _num("crop_box_x0", vals["crop_box_x0"]),
                    _num("crop_box_y0", vals["crop_box_y0"]),
                    _num("crop_box_w", vals["crop_box_w"]),
                    _num("crop_box_h", vals["crop_box_h"]),
                ),
            )
        )
    return proposals


def _csv_num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def serialize_proposals(proposals: list[RoiProposal]) -> bytes:
    lines = [",".join(PROPOSAL_HEADER)]
    for p in proposals:
        lines.append(
            ",".join(
                [
                    str(p.id),
                    str(p.area),
                    _csv_num(p.bbox.x),
                    _csv_num(p.bbox.y),
                    _csv_num(p.bbox.w),
                    _csv_num(p.bbox.h),
                    _csv_num(p.point_input_x),
                    _csv_num(p.point_input_y),
                    repr(p.predicted_iou),
                    repr(p.stability_score),
                    _csv_num(p.crop_box.x),
                    _csv_num(p.crop_box.y),
                    _csv_num(p.crop_box.w),
                    _csv_num(p.crop_box.h),
                ]
            )
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- region-naming records ---------------------------------------------------

_QUOTED = re.compile(r'"([^"]*)"')
_LIKELIHOOD = re.compile(r"likelihood\s+of\s+([0-9]+(?:\.[0-9]+)?)", re.IGNORECASE)


def parse_lvlm_record(text: str, det_name: str = "") -> AutoLabelRecord:
    """Parse one naming response by anchored pattern: first double-quoted
    phrase is the category, first "likelihood of <number>" after it is the
    likelihood. Never raises on arbitrary text; a record with no quoted
    phrase is flagged unparseable instead.
    """
    m = _QUOTED.search(text)
    if m is None or not m.group(1).strip():
        return AutoLabelRecord(
            det_name=det_name,
            raw_text=text,
            category="",
            likelihood=None,
            unrecognized=False,
            unparseable=True,
        )
    phrase = m.group(1)
    unrecognized = phrase == "Unrecognized"
    lk = _LIKELIHOOD.search(text, m.end())
    likelihood = None
    if lk is not None:
        v = float(lk.group(1))
        if 0.0 <= v <= 1.0:
            likelihood = v
    return AutoLabelRecord(
        det_name=det_name,
        raw_text=text,
        category=canonicalize_category(phrase),
        likelihood=likelihood,
        unrecognized=unrecognized,
    )


def read_lvlm_records(data: bytes) -> list[AutoLabelRecord]:
    """Read a JSON-lines stream of {det_name, text} naming results.

    The tabulated class/likelihood columns, when present, are derived values
    and never trusted; everything is re-parsed from the text.
    """
    records = []
    for line in data.decode("utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        records.append(parse_lvlm_record(row["text"], det_name=row.get("det_name", "")))
    return records
