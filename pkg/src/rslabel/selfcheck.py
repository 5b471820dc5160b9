"""Self-contained invariant suite for the math kernel, used by the
`check-math` command. Each check is independent and reports pass/fail."""

from __future__ import annotations

import math

import numpy as np

from .core import BBox
from .numerics import (
    LossWeights,
    cls_loss,
    cls_loss_grad,
    grad_check,
    loc_loss,
    scene_feature,
    total_loss,
    visgt_loss,
    visgt_loss_grad,
    visual_mean_pool,
)


def run_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    results = []

    def check(name, ok, detail=""):
        results.append((name, bool(ok), detail))

    # Scene feature: brute-force summation agreement.
    feats = rng.normal(size=(5, 8))
    lengths = rng.integers(1, 6, size=5)
    expected = sum(lengths[i] * feats[i] for i in range(5)) / 5
    check(
        "scene_feature matches brute-force summation",
        np.allclose(scene_feature(feats, lengths), expected, atol=0, rtol=0),
    )
    check(
        "scene_feature is linear in features",
        np.allclose(scene_feature(3.0 * feats, lengths), 3.0 * scene_feature(feats, lengths)),
    )

    # Mean pool: per-column average.
    visual = rng.normal(size=(7, 4))
    check(
        "visual_mean_pool matches per-column average",
        np.allclose(visual_mean_pool(visual), visual.sum(axis=0) / 7, atol=0, rtol=0),
    )

    # Scene-alignment loss basics.
    check("visgt_loss n=1 is exactly 0", visgt_loss(np.ones((1, 3)), np.ones((1, 3)), 0.07) == 0.0)
    two = np.eye(2)
    expected_two = -math.log(math.e / (math.e + 1.0))
    check(
        "visgt_loss n=2 identity similarity",
        abs(visgt_loss(two, two, 1.0) - expected_two) < 1e-12,
        f"got {visgt_loss(two, two, 1.0)}",
    )
    pred = rng.normal(size=(6, 5))
    true = rng.normal(size=(6, 5))
    perm = rng.permutation(6)
    check(
        "visgt_loss invariant under batch relabeling",
        abs(visgt_loss(pred, true, 0.07) - visgt_loss(pred[perm], true[perm], 0.07)) < 1e-9,
    )
    check("visgt_loss non-negative", visgt_loss(pred, true, 0.07) >= 0.0)
    check(
        "visgt_loss finite at extreme temperature",
        np.isfinite(visgt_loss(100.0 * pred, 100.0 * true, 1e-3)),
    )

    # Gradients against central differences.
    worst = max(
        grad_check(lambda x: visgt_loss_grad(x, true[:4, :], 0.5), rng.normal(size=(4, 5)))
        for _ in range(5)
    )
    check("visgt_loss gradient matches finite differences", worst < 1e-5, f"max rel err {worst:.2e}")
    labels = rng.integers(0, 6, size=4)
    worst = max(
        grad_check(lambda x: cls_loss_grad(x, labels), rng.normal(size=(4, 6)))
        for _ in range(5)
    )
    check("cls_loss gradient matches finite differences", worst < 1e-5, f"max rel err {worst:.2e}")

    # Classification loss closed forms.
    check(
        "cls_loss uniform logits equals r*ln(k)",
        abs(cls_loss(np.zeros((3, 7)), [0, 1, 2]) - 3 * math.log(7)) < 1e-12,
    )
    check("cls_loss empty object list is 0", cls_loss(np.zeros((0, 5)), []) == 0.0)

    # Localization and total loss wiring.
    w = LossWeights()
    a = BBox(0, 0, 10, 10)
    check("loc_loss exact localization is 0", loc_loss([a], [a], w) == 0.0)
    pred_box = BBox(0, 0, 1, 1)
    gt_box = BBox(1, 0, 1, 1)
    # L1 distance 1, IoU 0, enclosure 2, union 2 -> giou 0 -> 5*1 + 2*1 = 7.
    check("loc_loss hand-computed case", abs(loc_loss([pred_box], [gt_box], w) - 7.0) < 1e-12)
    check("total_loss weighted sum", abs(total_loss(2.0, 0.5, 0.1, w) - 3.5) < 1e-12)
    check(
        "total_loss beta=0 degenerates",
        total_loss(1.0, 2.0, 9.0, LossWeights(beta=0.0)) == 1.0 + 2.0,
    )

    return results


def format_results(results: list[tuple[str, bool, str]]) -> str:
    width = max(len(name) for name, _, _ in results)
    lines = []
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        suffix = f"  ({detail})" if detail and not ok else ""
        lines.append(f"{name:<{width}}  {status}{suffix}")
    n_ok = sum(ok for _, ok, _ in results)
    lines.append(f"{n_ok}/{len(results)} checks passed")
    return "\n".join(lines)
