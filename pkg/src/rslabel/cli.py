"""Command-line entry point: one subcommand per pipeline stage, config-driven
and reproducible. Every run writes a run manifest (inputs, config hash, seed)
alongside its outputs; failures exit nonzero with a machine-readable error
record on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import autolabel as al
from . import dvc as dvc_mod
from . import evaluation, formats, pipeline, report, selfcheck, tiler
from .core import BBox, DatasetManifest, ImageRecord, Instance, canonicalize_category


def _clip_instance(inst: Instance, width: float, height: float) -> Instance | None:
    """Clip an instance box to the image extent; None when nothing remains."""
    x0 = min(max(inst.box.x, 0.0), width)
    y0 = min(max(inst.box.y, 0.0), height)
    x1 = min(max(inst.box.x + inst.box.w, 0.0), width)
    y1 = min(max(inst.box.y + inst.box.h, 0.0), height)
    if x1 <= x0 or y1 <= y0:
        return None
    return replace(inst, box=BBox(x0, y0, x1 - x0, y1 - y0))


def load_config(path: str | None) -> dict[str, str]:
    """Flat key = value config file; blank lines and #-comments ignored."""
    if path is None:
        return {}
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        cfg[key.strip()] = value.strip()
    return cfg


def _setting(args, cfg: dict, name: str, cast, default):
    cli_val = getattr(args, name.replace("-", "_"), None)
    if cli_val is not None:
        return cli_val
    if name in cfg:
        return cast(cfg[name])
    return default


def write_run_manifest(out_dir: Path, command: str, settings: dict, inputs: list[str]):
    out_dir.mkdir(parents=True, exist_ok=True)
    blob = json.dumps(settings, sort_keys=True).encode()
    doc = {
        "command": command,
        "settings": settings,
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "inputs": inputs,
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _read_manifest_file(path: str) -> DatasetManifest:
    return formats.read_manifest(Path(path).read_bytes())


def _write_manifest_file(m: DatasetManifest, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(formats.write_manifest(m))


# -- subcommands -------------------------------------------------------------


def cmd_tile(args, cfg):
    spec = tiler.TileSpec(
        tile_size=_setting(args, cfg, "tile-size", int, 1024),
        overlap_ratio=_setting(args, cfg, "overlap", float, 0.2),
        min_visibility=_setting(args, cfg, "min-visibility", float, 0.25),
    )
    m = _read_manifest_file(args.input)
    out_dir = Path(args.out_dir)
    tiles_doc = []
    distinct = 0
    for rec in m.images:
        tiles = tiler.slice_image(rec, spec)
        distinct += tiler.dedup_instances(tiles)
        for t in tiles:
            tiles_doc.append(
                {
                    "parent_image_id": t.parent_image_id,
                    "origin": [t.origin_x, t.origin_y],
                    "size": [t.width, t.height],
                    "instances": [
                        {
                            "bbox": [i.box.x, i.box.y, i.box.w, i.box.h],
                            "category": i.category,
                            "source_id": i.source_id,
                        }
                        for i in t.instances
                    ],
                }
            )
    write_run_manifest(
        out_dir,
        "tile",
        {
            "tile_size": spec.tile_size,
            "overlap_ratio": spec.overlap_ratio,
            "min_visibility": spec.min_visibility,
        },
        [args.input],
    )
    (out_dir / "tiles.json").write_text(json.dumps(tiles_doc, indent=2) + "\n")
    print(f"{len(tiles_doc)} tiles, {distinct} distinct instances")
    return 0


def cmd_convert(args, cfg):
    """Exemplar adapter: plain nested-JSON annotations to canonical manifest."""
    doc = json.loads(Path(args.input).read_text())
    categories: list[str] = []
    seen = set()
    images = []
    for im in doc["images"]:
        instances = []
        for k, obj in enumerate(im.get("objects", [])):
            cat = canonicalize_category(obj["category"])
            if cat not in seen:
                seen.add(cat)
                categories.append(cat)
            x, y, w, h = obj["bbox"]
            instances.append(
                Instance(
                    box=BBox(float(x), float(y), float(w), float(h)),
                    category=cat,
                    source_id=obj.get("source_id", f"{im['id']}:{k}"),
                    likelihood=obj.get("likelihood"),
                )
            )
        images.append(
            ImageRecord(
                image_id=str(im["id"]),
                width=int(im["width"]),
                height=int(im["height"]),
                uri=str(im.get("uri", "")),
                instances=tuple(instances),
            )
        )
    m = DatasetManifest(name=doc.get("name", Path(args.input).stem), categories=tuple(categories), images=tuple(images))
    out_dir = Path(args.out_dir)
    write_run_manifest(out_dir, "convert", {}, [args.input])
    _write_manifest_file(m, out_dir / "manifest.json")
    print(f"converted {len(images)} images, {len(categories)} categories")
    return 0


def cmd_sample(args, cfg):
    policy = pipeline.SamplePolicy(
        rate=_setting(args, cfg, "rate", float, 0.4),
        threshold=_setting(args, cfg, "threshold", int, 100),
        seed=args.seed,
    )
    m = _read_manifest_file(args.input)
    sampled = pipeline.sample_by_class(m, policy)
    out_dir = Path(args.out_dir)
    write_run_manifest(
        out_dir,
        "sample",
        {"rate": policy.rate, "threshold": policy.threshold, "seed": policy.seed},
        [args.input],
    )
    _write_manifest_file(sampled, out_dir / "manifest.json")
    print(f"{m.instance_count} -> {sampled.instance_count} instances")
    return 0


def cmd_split(args, cfg):
    cap = _setting(args, cfg, "cap", int, 200)
    m = _read_manifest_file(args.input)
    images = []
    for rec in m.images:
        images.extend(pipeline.split_dense(rec, cap))
    out = DatasetManifest(name=m.name, categories=m.categories, images=tuple(images))
    out_dir = Path(args.out_dir)
    write_run_manifest(out_dir, "split", {"cap": cap, "seed": args.seed}, [args.input])
    _write_manifest_file(out, out_dir / "manifest.json")
    print(f"{len(m.images)} -> {len(images)} image records")
    return 0


def cmd_merge(args, cfg):
    ms = [_read_manifest_file(p) for p in args.inputs]
    merged = pipeline.merge_manifests(ms, dedup=args.dedup)
    out_dir = Path(args.out_dir)
    write_run_manifest(out_dir, "merge", {"dedup": args.dedup}, list(args.inputs))
    _write_manifest_file(merged, out_dir / "manifest.json")
    print(f"merged {len(ms)} manifests: {merged.instance_count} instances")
    return 0


def cmd_autolabel(args, cfg):
    pcfg = al.ProposalConfig(
        points_per_image=_setting(args, cfg, "points", int, 32),
        pred_iou_threshold=_setting(args, cfg, "pred-iou", float, 0.86),
        stability_threshold=_setting(args, cfg, "stability", float, 0.92),
        downsample_factor=_setting(args, cfg, "downsample", int, 2),
        top_k_large=_setting(args, cfg, "top-k-large", int, 10),
        top_k_small=_setting(args, cfg, "top-k-small", int, 5),
        small_image_cutoff=_setting(args, cfg, "small-cutoff", int, 600),
    )
    policy = al.FilterPolicy(
        min_likelihood=_setting(args, cfg, "min-likelihood", float, 0.5),
        monotone_std_threshold=_setting(args, cfg, "monotone-std", float, 5.0),
    )
    m = _read_manifest_file(args.input)
    images = [(rec.uri or rec.image_id, (rec.width, rec.height)) for rec in m.images]

    env_sam, env_lvlm, env_key = al.endpoints_from_env()
    sam_endpoint = args.sam_endpoint or env_sam
    lvlm_endpoint = args.lvlm_endpoint or env_lvlm

    mock = None
    if args.mock:
        from .mock_services import MockServices

        mock = MockServices(fail_rate=args.fail_rate)
        mock.__enter__()
        sam_endpoint = mock.proposal_endpoint
        lvlm_endpoint = mock.naming_endpoint
    if not sam_endpoint or not lvlm_endpoint:
        raise SystemExit(
            f"service endpoints required: set {al.ENV_SAM_ENDPOINT}/{al.ENV_LVLM_ENDPOINT} "
            "or pass --sam-endpoint/--lvlm-endpoint (or --mock)"
        )
    try:
        results = al.label_batch(
            images, pcfg, policy, sam_endpoint, lvlm_endpoint,
            api_key=args.api_key or env_key, workers=args.workers,
        )
    finally:
        if mock is not None:
            mock.__exit__(None, None, None)

    categories: list[str] = []
    seen = set()
    out_images = []
    failures = []
    for rec, res in zip(m.images, results):
        if res.failed:
            failures.append({"image": res.image_uri, "error": res.error})
            out_images.append(rec.with_instances(()))
            continue
        kept = []
        for inst in res.instances:
            clipped = _clip_instance(inst, rec.width, rec.height)
            if clipped is None:
                continue
            kept.append(clipped)
            if clipped.category not in seen:
                seen.add(clipped.category)
                categories.append(clipped.category)
        out_images.append(rec.with_instances(tuple(kept)))
    labeled = DatasetManifest(name=f"{m.name}-autolabeled", categories=tuple(categories), images=tuple(out_images))
    out_dir = Path(args.out_dir)
    write_run_manifest(
        out_dir,
        "autolabel",
        {
            "proposal_config": pcfg.__dict__,
            "filter_policy": {
                "min_likelihood": policy.min_likelihood,
                "monotone_std_threshold": policy.monotone_std_threshold,
            },
            "seed": args.seed,
            "mock": bool(args.mock),
            "fail_rate": args.fail_rate,
        },
        [args.input],
    )
    _write_manifest_file(labeled, out_dir / "manifest.json")
    (out_dir / "failures.json").write_text(json.dumps(failures, indent=2) + "\n")
    print(
        f"labeled {len(out_images) - len(failures)}/{len(out_images)} images, "
        f"{labeled.instance_count} instances, {len(failures)} failures"
    )
    return 0


def cmd_filter(args, cfg):
    policy = al.FilterPolicy(
        min_likelihood=_setting(args, cfg, "min-likelihood", float, 0.5),
        monotone_std_threshold=_setting(args, cfg, "monotone-std", float, 5.0),
        category_blocklist=frozenset(args.block or ()),
    )
    proposals = formats.parse_proposals(Path(args.proposals).read_bytes())
    records = formats.read_lvlm_records(Path(args.records).read_bytes())
    if len(proposals) != len(records):
        raise SystemExit(
            f"{len(proposals)} proposals vs {len(records)} records: inputs must align pairwise"
        )
    instances = al.rule_filter(list(zip(proposals, records)), policy)
    out_dir = Path(args.out_dir)
    write_run_manifest(
        out_dir,
        "filter",
        {"min_likelihood": policy.min_likelihood, "blocklist": sorted(policy.category_blocklist)},
        [args.proposals, args.records],
    )
    lines = [
        json.dumps(
            {
                "bbox": [i.box.x, i.box.y, i.box.w, i.box.h],
                "category": i.category,
                "likelihood": i.likelihood,
                "source_id": i.source_id,
            },
            sort_keys=True,
        )
        for i in instances
    ]
    (out_dir / "instances.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""))
    print(f"{len(instances)}/{len(records)} records kept")
    return 0


def default_selections_path() -> Path:
    return Path(str(resources.files("rslabel").joinpath("data/benchmark_selections.json")))


def load_selections(path: Path) -> list[pipeline.BenchmarkSelection]:
    doc = json.loads(path.read_text())
    return [
        pipeline.BenchmarkSelection(
            source_dataset=row["source_dataset"],
            selected_categories=tuple(row["selected_categories"]),
        )
        for row in doc
    ]


def cmd_assemble_benchmark(args, cfg):
    sel_path = Path(args.selections) if args.selections else default_selections_path()
    selections = load_selections(sel_path)
    pools = [_read_manifest_file(p) for p in args.pools]
    bench = pipeline.assemble_benchmark(selections, pools)
    out_dir = Path(args.out_dir)
    write_run_manifest(out_dir, "assemble-benchmark", {"selections": str(sel_path)}, list(args.pools))
    _write_manifest_file(bench, out_dir / "manifest.json")
    print(f"benchmark with {len(bench.categories)} categories, {bench.instance_count} instances")
    return 0


def cmd_dvc_sample(args, cfg):
    registry = dvc_mod.VocabRegistry(tuple(json.loads(Path(args.registry).read_text())))
    positives = set(args.positive or ())
    n_dv = _setting(args, cfg, "n-dv", int, dvc_mod.DEFAULT_CAPACITY)
    out_dir = Path(args.out_dir)
    write_run_manifest(
        out_dir,
        "dvc-sample",
        {"n_dv": n_dv, "batches": args.batches, "seed": args.seed, "positives": sorted(positives)},
        [args.registry],
    )
    lines = []
    for step in range(args.batches):
        batch = dvc_mod.build_batch(registry, positives, n_dv=n_dv, seed=args.seed + step)
        lines.append(
            json.dumps(
                {"seed": args.seed + step, "positive_count": batch.positive_count, "entries": list(batch.entries)}
            )
        )
    (out_dir / "batches.jsonl").write_text("\n".join(lines) + "\n")
    print(f"wrote {args.batches} batches of {n_dv}")
    return 0


def cmd_eval(args, cfg):
    bench = _read_manifest_file(args.benchmark)
    dets = evaluation.read_detections(Path(args.detections).read_bytes())
    rep = evaluation.evaluate(dets, bench, interpolation=args.interpolation)
    out_dir = Path(args.out_dir)
    write_run_manifest(
        out_dir, "eval", {"interpolation": args.interpolation}, [args.benchmark, args.detections]
    )
    (out_dir / "report.json").write_text(rep.to_json())
    (out_dir / "report.txt").write_text(rep.to_table())
    figures = report.render_pr_curves(dets, bench, out_dir / "figures")
    print(rep.to_table(), end="")
    print(f"wrote {len(figures)} PR-curve figures to {out_dir / 'figures'}")
    return 0


def cmd_check_math(args, cfg):
    results = selfcheck.run_checks(seed=args.seed)
    print(selfcheck.format_results(results))
    return 0 if all(ok for _, ok, _ in results) else 1


def cmd_stats(args, cfg):
    m = _read_manifest_file(args.input)
    counts = m.instances_by_category()
    summary = {
        "name": m.name,
        "images": len(m.images),
        "categories": len(m.categories),
        "instances": m.instance_count,
        "instances_per_category": counts,
    }
    if args.out_dir:
        out_dir = Path(args.out_dir)
        write_run_manifest(out_dir, "stats", {}, [args.input])
        (out_dir / "stats.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        report.render_category_histogram(m, out_dir / "figures" / "categories.png")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rslabel", description=__doc__)
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    parser.add_argument("--workers", type=int, default=8)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        return p

    p = add("tile", cmd_tile, help="slice manifest images into tiles")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--tile-size", type=int)
    p.add_argument("--overlap", type=float)
    p.add_argument("--min-visibility", type=float)

    p = add("convert", cmd_convert, help="convert plain JSON annotations to the canonical manifest")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)

    p = add("sample", cmd_sample, help="class-preserving instance sampling")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--rate", type=float)
    p.add_argument("--threshold", type=int)

    p = add("split", cmd_split, help="split over-dense image annotations")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--cap", type=int)

    p = add("merge", cmd_merge, help="merge manifests")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dedup", action="store_true")

    p = add("autolabel", cmd_autolabel, help="run the proposal + naming services over a manifest")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sam-endpoint")
    p.add_argument("--lvlm-endpoint")
    p.add_argument("--api-key")
    p.add_argument("--mock", action="store_true", help="use the in-process mock services")
    p.add_argument("--fail-rate", type=float, default=0.0, help="mock transient failure rate")
    p.add_argument("--points", type=int)
    p.add_argument("--pred-iou", type=float)
    p.add_argument("--stability", type=float)
    p.add_argument("--downsample", type=int)
    p.add_argument("--top-k-large", type=int)
    p.add_argument("--top-k-small", type=int)
    p.add_argument("--small-cutoff", type=int)
    p.add_argument("--min-likelihood", type=float)
    p.add_argument("--monotone-std", type=float)

    p = add("filter", cmd_filter, help="rule-filter aligned proposal/naming files")
    p.add_argument("--proposals", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--min-likelihood", type=float)
    p.add_argument("--monotone-std", type=float)
    p.add_argument("--block", action="append", help="blocklisted category (repeatable)")

    p = add("assemble-benchmark", cmd_assemble_benchmark, help="assemble an evaluation benchmark")
    p.add_argument("pools", nargs="+")
    p.add_argument("--selections", help="selections JSON (default: shipped 80-category fixture)")
    p.add_argument("--out-dir", required=True)

    p = add("dvc-sample", cmd_dvc_sample, help="emit fixed-length vocabulary batches")
    p.add_argument("registry", help="JSON list of categories")
    p.add_argument("--positive", action="append")
    p.add_argument("--n-dv", type=int)
    p.add_argument("--batches", type=int, default=1)
    p.add_argument("--out-dir", required=True)

    p = add("eval", cmd_eval, help="evaluate detections against a benchmark")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--interpolation", choices=["101", "11"], default="101")

    add("check-math", cmd_check_math, help="run the math kernel invariant suite")

    p = add("stats", cmd_stats, help="manifest summary counts")
    p.add_argument("input")
    p.add_argument("--out-dir")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = load_config(args.config)
    try:
        return args.fn(args, cfg)
    except SystemExit:
        raise
    except Exception as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
