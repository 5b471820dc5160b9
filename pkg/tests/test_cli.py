import json

from rslabel import cli
from rslabel.core import BBox, DatasetManifest, ImageRecord, Instance
from rslabel.evaluation import ScoredDetection, write_detections
from rslabel.formats import read_manifest, write_manifest


def _write(path, manifest):
    path.write_bytes(write_manifest(manifest))
    return str(path)


def _fixture_2048(tmp_path):
    rec = ImageRecord(
        image_id="big",
        width=2048,
        height=2048,
        uri="big.png",
        instances=(Instance(box=BBox(10, 10, 50, 50), category="ship", source_id="s0"),),
    )
    m = DatasetManifest(name="fix", categories=("ship",), images=(rec,))
    return _write(tmp_path / "manifest.json", m)


class TestTileCommand:
    def test_nine_tiles(self, tmp_path, capsys):
        inp = _fixture_2048(tmp_path)
        out = tmp_path / "out"
        assert cli.main(["tile", inp, "--out-dir", str(out), "--tile-size", "1024", "--overlap", "0.2"]) == 0
        tiles = json.loads((out / "tiles.json").read_text())
        assert len(tiles) == 9
        assert (out / "run_manifest.json").exists()

    def test_run_manifest_has_config_hash(self, tmp_path):
        inp = _fixture_2048(tmp_path)
        out = tmp_path / "out"
        cli.main(["tile", inp, "--out-dir", str(out)])
        doc = json.loads((out / "run_manifest.json").read_text())
        assert doc["command"] == "tile"
        assert len(doc["config_hash"]) == 64


class TestConvertCommand:
    def test_plain_json_adapter(self, tmp_path):
        doc = {
            "name": "plain",
            "images": [
                {
                    "id": "a",
                    "width": 100,
                    "height": 100,
                    "uri": "a.png",
                    "objects": [{"bbox": [1, 2, 3, 4], "category": "Ship"}],
                }
            ],
        }
        inp = tmp_path / "plain.json"
        inp.write_text(json.dumps(doc))
        out = tmp_path / "out"
        assert cli.main(["convert", str(inp), "--out-dir", str(out)]) == 0
        m = read_manifest((out / "manifest.json").read_bytes())
        assert m.categories == ("ship",)
        assert m.instance_count == 1


class TestSampleSplitMerge:
    def test_sample_deterministic_outputs(self, tmp_path):
        instances = tuple(
            Instance(box=BBox(k % 50, k // 50, 1, 1), category="ship", source_id=str(k))
            for k in range(500)
        )
        rec = ImageRecord(image_id="im", width=100, height=100, uri="", instances=instances)
        inp = _write(tmp_path / "m.json", DatasetManifest(name="m", categories=("ship",), images=(rec,)))
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        cli.main(["--seed", "7", "sample", inp, "--out-dir", str(out1), "--rate", "0.4"])
        cli.main(["--seed", "7", "sample", inp, "--out-dir", str(out2), "--rate", "0.4"])
        assert (out1 / "manifest.json").read_bytes() == (out2 / "manifest.json").read_bytes()
        m = read_manifest((out1 / "manifest.json").read_bytes())
        assert m.instance_count == 200

    def test_split_and_merge(self, tmp_path):
        instances = tuple(
            Instance(box=BBox(k % 50, k // 50, 1, 1), category="ship", source_id=str(k))
            for k in range(450)
        )
        rec = ImageRecord(image_id="im", width=100, height=100, uri="", instances=instances)
        inp = _write(tmp_path / "m.json", DatasetManifest(name="m", categories=("ship",), images=(rec,)))
        out = tmp_path / "split"
        assert cli.main(["split", inp, "--out-dir", str(out), "--cap", "200"]) == 0
        m = read_manifest((out / "manifest.json").read_bytes())
        assert [len(r.instances) for r in m.images] == [200, 200, 50]

        merged_dir = tmp_path / "merged"
        assert cli.main(["merge", inp, inp, "--dedup", "--out-dir", str(merged_dir)]) == 0
        merged = read_manifest((merged_dir / "manifest.json").read_bytes())
        assert merged.instance_count == 450


class TestBenchmarkAndDvc:
    def test_assemble_with_shipped_selections(self, tmp_path, selections_doc):
        pools = []
        for sel in selections_doc:
            cats = tuple(sel["selected_categories"])
            m = DatasetManifest(name=sel["source_dataset"], categories=cats, images=())
            pools.append(_write(tmp_path / f"{sel['source_dataset']}.json", m))
        out = tmp_path / "bench"
        assert cli.main(["assemble-benchmark", *pools, "--out-dir", str(out)]) == 0
        bench = read_manifest((out / "manifest.json").read_bytes())
        assert len(bench.categories) == 80

    def test_dvc_sample_jsonl(self, tmp_path):
        reg = tmp_path / "registry.json"
        reg.write_text(json.dumps([f"c{i}" for i in range(100)]))
        out = tmp_path / "dvc"
        assert cli.main([
            "--seed", "3", "dvc-sample", str(reg), "--positive", "c5",
            "--n-dv", "10", "--batches", "4", "--out-dir", str(out),
        ]) == 0
        lines = (out / "batches.jsonl").read_text().splitlines()
        assert len(lines) == 4
        for line in lines:
            doc = json.loads(line)
            assert len(doc["entries"]) == 10
            assert doc["entries"][0] == "c5"


class TestEvalAndStats:
    def test_eval_writes_reports_and_figures(self, tmp_path):
        rec = ImageRecord(
            image_id="im", width=100, height=100, uri="",
            instances=(Instance(box=BBox(0, 0, 10, 10), category="ship", source_id="g0"),),
        )
        bench = _write(tmp_path / "bench.json", DatasetManifest(name="b", categories=("ship",), images=(rec,)))
        dets = tmp_path / "dets.jsonl"
        dets.write_bytes(
            write_detections([ScoredDetection(image_id="im", category="ship", box=BBox(0, 0, 10, 10), score=0.9)])
        )
        out = tmp_path / "eval"
        assert cli.main(["eval", "--benchmark", bench, "--detections", str(dets), "--out-dir", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["map"] == 1.0
        assert (out / "report.txt").read_text().startswith("category")
        figures = list((out / "figures").glob("pr_*.png"))
        assert len(figures) == 1

    def test_stats(self, tmp_path, capsys):
        inp = _fixture_2048(tmp_path)
        out = tmp_path / "stats"
        assert cli.main(["stats", inp, "--out-dir", str(out)]) == 0
        doc = json.loads((out / "stats.json").read_text())
        assert doc["instances"] == 1 and doc["categories"] == 1 and doc["images"] == 1
        assert (out / "figures" / "categories.png").exists()


class TestErrors:
    def test_missing_input_machine_readable(self, tmp_path, capsys):
        assert cli.main(["stats", str(tmp_path / "absent.json")]) == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert err["command"] == "stats"

    def test_config_file_overrides(self, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("tile-size = 512\noverlap = 0.0\n")
        inp = _fixture_2048(tmp_path)
        out = tmp_path / "out"
        assert cli.main(["--config", str(cfgfile), "tile", inp, "--out-dir", str(out)]) == 0
        tiles = json.loads((out / "tiles.json").read_text())
        assert len(tiles) == 16

    def test_check_math_exit_zero(self, capsys):
        assert cli.main(["check-math"]) == 0
        assert "PASS" in capsys.readouterr().out


class TestAutolabelCommand:
    def test_mock_end_to_end(self, tmp_path):
        recs = tuple(
            ImageRecord(image_id=f"i{k}", width=1024 if k % 2 == 0 else 256,
                        height=1024 if k % 2 == 0 else 256, uri=f"image://i{k}")
            for k in range(4)
        )
        inp = _write(tmp_path / "m.json", DatasetManifest(name="u", categories=(), images=recs))
        out = tmp_path / "auto"
        assert cli.main([
            "--workers", "4", "autolabel", inp, "--out-dir", str(out), "--mock", "--fail-rate", "0.2",
        ]) == 0
        labeled = read_manifest((out / "manifest.json").read_bytes())
        assert len(labeled.images) == 4
        assert json.loads((out / "failures.json").read_text()) == []
