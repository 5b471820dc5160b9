"""Figure rendering for the report paths: precision-recall curves next to
the evaluation tables, category histograms next to the stats output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .core import DatasetManifest
from .evaluation import ScoredDetection, canonicalize_category, pr_curve


def render_pr_curves(
    dets: list[ScoredDetection],
    benchmark: DatasetManifest,
    out_dir: Path,
    thresholds=(0.5, 0.75),
) -> list[Path]:
    """One PR-curve figure per category with ground truths or detections."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    dets_by_cat: dict[str, list[ScoredDetection]] = {}
    for d in dets:
        dets_by_cat.setdefault(canonicalize_category(d.category), []).append(d)
    gts_by_cat: dict[str, dict] = {}
    for rec in benchmark.images:
        for inst in rec.instances:
            gts_by_cat.setdefault(inst.category, {}).setdefault(rec.image_id, []).append(inst)

    written = []
    for cat in benchmark.categories:
        if cat not in dets_by_cat and cat not in gts_by_cat:
            continue
        fig, ax = plt.subplots(figsize=(5, 4))
        for thr in thresholds:
            recall, precision = pr_curve(
                dets_by_cat.get(cat, []), gts_by_cat.get(cat, {}), thr
            )
            ax.plot(recall, precision, marker=".", label=f"IoU {thr:.2f}")
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.set_title(cat)
        ax.legend(loc="lower left")
        ax.grid(True, alpha=0.3)
        path = out_dir / f"pr_{cat.replace(' ', '_').replace('/', '-')}.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def render_category_histogram(m: DatasetManifest, out_path: Path) -> Path:
    """Horizontal bar chart of instance counts per category."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    counts = m.instances_by_category()
    cats = sorted(counts, key=counts.get, reverse=True)
    values = [counts[c] for c in cats]

    fig, ax = plt.subplots(figsize=(6, max(2.0, 0.3 * len(cats) + 1)))
    ax.barh(range(len(cats)), values)
    ax.set_yticks(range(len(cats)))
    ax.set_yticklabels(cats, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("instances")
    ax.set_title(m.name or "dataset")
    fig.savefig(out_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out_path
