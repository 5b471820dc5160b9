import json

import pytest

from rslabel.core import BBox, UnknownCategoryError
from rslabel.formats import (
    ManifestFormatError,
    ProposalFormatError,
    parse_lvlm_record,
    parse_proposals,
    read_lvlm_records,
    read_manifest,
    serialize_proposals,
    write_manifest,
)
from .conftest import make_manifest


class TestManifestCodec:
    def test_minimal_round_trip(self, small_manifest):
        data = write_manifest(small_manifest)
        decoded = read_manifest(data)
        assert decoded == small_manifest

    def test_round_trip_byte_identical(self, small_manifest):
        canonical = write_manifest(small_manifest)
        assert write_manifest(read_manifest(canonical)) == canonical

    def test_empty_manifest(self):
        m = make_manifest(categories=(), images=())
        doc = json.loads(write_manifest(m))
        assert doc["images"] == [] and doc["categories"] == [] and doc["annotations"] == []
        assert read_manifest(write_manifest(m)) == m

    def test_instance_order_preserved(self, small_manifest):
        decoded = read_manifest(write_manifest(small_manifest))
        assert [i.source_id for i in decoded.images[0].instances] == ["d/0", "d/1"]

    def test_malformed_json(self):
        with pytest.raises(ManifestFormatError):
            read_manifest(b"{not json")

    def test_unknown_category_reference(self, small_manifest):
        doc = json.loads(write_manifest(small_manifest))
        doc["annotations"][0]["category_id"] = 99
        with pytest.raises(UnknownCategoryError):
            read_manifest(json.dumps(doc).encode())

    def test_negative_dimension(self, small_manifest):
        doc = json.loads(write_manifest(small_manifest))
        doc["images"][1]["height"] = -5
        with pytest.raises(ManifestFormatError):
            read_manifest(json.dumps(doc).encode())

    def test_likelihood_round_trips(self, small_manifest):
        rec = small_manifest.images[0]
        inst = rec.instances[0]
        m = make_manifest(
            images=(rec.with_instances((inst.__class__(box=inst.box, category=inst.category, source_id=inst.source_id, likelihood=0.9),)),)
        )
        decoded = read_manifest(write_manifest(m))
        assert decoded.images[0].instances[0].likelihood == 0.9


class TestProposalCsv:
    def test_paper_sample_rows(self, fixtures_dir):
        data = (fixtures_dir / "proposals_sample.csv").read_bytes()
        proposals = parse_proposals(data)
        assert len(proposals) == 7
        p0 = proposals[0]
        assert p0.id == 0 and p0.area == 1939
        assert p0.bbox == BBox(161, 210, 62, 45)
        assert p0.point_input_x == 197.21875
        assert p0.predicted_iou == 0.9753
        assert p0.crop_box == BBox(85, 85, 171, 171)
        p4 = proposals[4]
        assert p4.area == 60 and p4.stability_score == 1.0

    def test_reordered_header_rejected(self, fixtures_dir):
        lines = (fixtures_dir / "proposals_sample.csv").read_text().splitlines()
        header = lines[0].split(",")
        header[0], header[1] = header[1], header[0]
        bad = "\n".join([",".join(header)] + lines[1:])
        with pytest.raises(ProposalFormatError, match="header"):
            parse_proposals(bad.encode())

    def test_row_arity(self, fixtures_dir):
        lines = (fixtures_dir / "proposals_sample.csv").read_text().splitlines()
        bad = "\n".join([lines[0], lines[1] + ",extra"])
        with pytest.raises(ProposalFormatError, match="fields"):
            parse_proposals(bad.encode())

    def test_non_numeric_field(self, fixtures_dir):
        lines = (fixtures_dir / "proposals_sample.csv").read_text().splitlines()
        bad = "\n".join([lines[0], lines[1].replace("1939", "many")])
        with pytest.raises(ProposalFormatError, match="non-numeric"):
            parse_proposals(bad.encode())

    def test_serialize_round_trip(self, fixtures_dir):
        proposals = parse_proposals((fixtures_dir / "proposals_sample.csv").read_bytes())
        assert parse_proposals(serialize_proposals(proposals)) == proposals


class TestLvlmRecords:
    def test_road_row(self):
        rec = parse_lvlm_record('"Road" with a likelihood of 0.9. The image shows a paved surface.')
        assert (rec.category, rec.likelihood, rec.unrecognized) == ("road", 0.9, False)

    def test_unrecognized_row(self):
        rec = parse_lvlm_record('"Unrecognized" with a likelihood of 0.8. Too blurry.')
        assert rec.unrecognized is True
        assert rec.category == "unrecognized"
        assert rec.likelihood == 0.8

    def test_integer_likelihood(self):
        rec = parse_lvlm_record('"Airport runway" with a likelihood of 1.')
        assert rec.category == "airport runway"
        assert rec.likelihood == 1.0

    def test_no_quoted_phrase(self):
        rec = parse_lvlm_record("plain prose with no category at all")
        assert rec.unparseable is True
        assert rec.likelihood is None

    def test_missing_likelihood(self):
        rec = parse_lvlm_record('"Ship" is probably what this is.')
        assert rec.category == "ship"
        assert rec.likelihood is None

    def test_never_raises_on_noise(self):
        for text in ["", '"', '""', "likelihood of 5", '"x" likelihood of 2.5']:
            parse_lvlm_record(text)

    def test_out_of_range_likelihood_is_missing(self):
        rec = parse_lvlm_record('"Ship" with a likelihood of 2.5.')
        assert rec.likelihood is None

    def test_jsonl_fixture(self, fixtures_dir):
        records = read_lvlm_records((fixtures_dir / "lvlm_sample.jsonl").read_bytes())
        assert len(records) == 6
        expected = [
            ("road", 0.9, False),
            ("airport runway", 1.0, False),
            ("airport", 0.9, False),
            ("runway", 0.9, False),
            ("airplanes", 0.9, False),
            ("unrecognized", 0.8, True),
        ]
        got = [(r.category, r.likelihood, r.unrecognized) for r in records]
        assert got == expected
