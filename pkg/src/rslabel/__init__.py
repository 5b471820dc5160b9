"""Batch toolchain for remote-sensing detection datasets: tiling, format
unification, sampling, semi-automated labeling, vocabulary batching, loss
math, and mAP evaluation."""

from .core import (
    BBox,
    DatasetManifest,
    ImageRecord,
    Instance,
    canonicalize_category,
    giou,
    iou,
)
from .dvc import VocabBatch, VocabRegistry, build_batch
from .evaluation import EvalReport, ScoredDetection, average_precision, evaluate
from .formats import (
    AutoLabelRecord,
    RoiProposal,
    parse_lvlm_record,
    parse_proposals,
    read_manifest,
    write_manifest,
)
from .numerics import (
    LossWeights,
    cls_loss,
    grad_check,
    loc_loss,
    scene_feature,
    total_loss,
    visgt_loss,
    visual_mean_pool,
)
from .pipeline import (
    BenchmarkSelection,
    SamplePolicy,
    assemble_benchmark,
    merge_manifests,
    sample_by_class,
    split_dense,
)
from .tiler import Tile, TileSpec, dedup_instances, plan_tiles, slice_image

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "Instance",
    "ImageRecord",
    "DatasetManifest",
    "iou",
    "giou",
    "canonicalize_category",
    "TileSpec",
    "Tile",
    "plan_tiles",
    "slice_image",
    "dedup_instances",
    "RoiProposal",
    "AutoLabelRecord",
    "read_manifest",
    "write_manifest",
    "parse_proposals",
    "parse_lvlm_record",
    "SamplePolicy",
    "BenchmarkSelection",
    "sample_by_class",
    "split_dense",
    "merge_manifests",
    "assemble_benchmark",
    "VocabRegistry",
    "VocabBatch",
    "build_batch",
    "LossWeights",
    "scene_feature",
    "visual_mean_pool",
    "visgt_loss",
    "cls_loss",
    "loc_loss",
    "total_loss",
    "grad_check",
    "ScoredDetection",
    "EvalReport",
    "average_precision",
    "evaluate",
]
