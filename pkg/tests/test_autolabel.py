import pytest

from rslabel.autolabel import (
    FilterPolicy,
    ProposalConfig,
    RetryPolicy,
    ServiceUnreachableError,
    label_batch,
    label_image,
    request_category,
    request_proposals,
    rule_filter,
)
from rslabel.core import BBox
from rslabel.formats import AutoLabelRecord, RoiProposal, parse_lvlm_record
from rslabel.mock_services import MockServices, make_naming_text, make_proposals

FAST_RETRY = RetryPolicy(max_attempts=4, base_delay=0.01, max_delay=0.05)


def proposal(pid, area, predicted_iou=0.95, stability=0.95):
    return RoiProposal(
        id=pid,
        area=area,
        bbox=BBox(0, 0, 10, max(1, area // 10)),
        point_input_x=5.0,
        point_input_y=5.0,
        predicted_iou=predicted_iou,
        stability_score=stability,
        crop_box=BBox(0, 0, 20, 20),
    )


def record(category="Road", likelihood=0.9, det_name="crop0"):
    text = f'"{category}" with a likelihood of {likelihood}.'
    return parse_lvlm_record(text, det_name=det_name)


class TestRuleFilter:
    def test_unrecognized_dropped(self):
        pairs = [(proposal(0, 100), record("Unrecognized", 0.8))]
        assert rule_filter(pairs, FilterPolicy()) == []

    def test_low_likelihood_dropped(self):
        pairs = [(proposal(0, 100), record(likelihood=0.3))]
        assert rule_filter(pairs, FilterPolicy(min_likelihood=0.5)) == []

    def test_missing_likelihood_dropped(self):
        rec = parse_lvlm_record('"Road" and nothing else')
        assert rule_filter([(proposal(0, 100), rec)], FilterPolicy()) == []

    def test_valid_record_kept(self):
        pairs = [(proposal(0, 100), record("Road", 0.9, det_name="c1"))]
        out = rule_filter(pairs, FilterPolicy())
        assert len(out) == 1
        inst = out[0]
        assert inst.category == "road"
        assert inst.likelihood == 0.9
        assert inst.source_id == "c1"
        assert inst.box == proposal(0, 100).bbox

    def test_blocklist(self):
        pairs = [(proposal(0, 100), record("Road", 0.9))]
        assert rule_filter(pairs, FilterPolicy(category_blocklist=frozenset({"ROAD"}))) == []

    def test_monotone_crop_dropped(self):
        pairs = [(proposal(0, 100), record("Road", 0.9, det_name="flat"))]
        out = rule_filter(pairs, FilterPolicy(monotone_std_threshold=5.0), crop_stats={"flat": 1.0})
        assert out == []

    def test_unparseable_dropped(self):
        rec = parse_lvlm_record("no category here")
        assert rule_filter([(proposal(0, 100), rec)], FilterPolicy()) == []

    def test_order_preserving(self):
        pairs = [
            (proposal(0, 100), record("Road", 0.9, det_name="a")),
            (proposal(1, 50), record("Ship", 0.8, det_name="b")),
        ]
        out = rule_filter(pairs, FilterPolicy())
        assert [i.source_id for i in out] == ["a", "b"]


class TestProposalClient:
    def test_thresholds_and_top_k(self):
        with MockServices() as mock:
            cfg = ProposalConfig()
            uri = "image://large0"
            got = request_proposals(uri, cfg, mock.proposal_endpoint, image_size=(1024, 1024), retry=FAST_RETRY)
            raw = make_proposals(uri)
            eligible = [
                r for r in raw
                if r["predicted_iou"] >= cfg.pred_iou_threshold
                and r["stability_score"] >= cfg.stability_threshold
            ]
            expected = sorted(eligible, key=lambda r: (-r["area"], r["id"]))[: cfg.top_k_large]
            assert [p.id for p in got] == [r["id"] for r in expected]
            assert all(p.predicted_iou >= 0.86 and p.stability_score >= 0.92 for p in got)

    def test_small_image_uses_smaller_k(self):
        with MockServices() as mock:
            cfg = ProposalConfig()
            got = request_proposals(
                "image://small0", cfg, mock.proposal_endpoint, image_size=(256, 256), retry=FAST_RETRY
            )
            assert len(got) <= cfg.top_k_small

    def test_unreachable_raises_after_retries(self):
        with pytest.raises(ServiceUnreachableError):
            request_proposals(
                "image://x", ProposalConfig(), "http://127.0.0.1:9/none",
                retry=RetryPolicy(max_attempts=2, base_delay=0.01),
            )


class TestNamingClient:
    def test_parses_mock_response(self):
        with MockServices() as mock:
            uri = "image://large0#crop_0_1_2_3_4"
            rec = request_category(uri, mock.naming_endpoint, retry=FAST_RETRY)
            assert rec == parse_lvlm_record(make_naming_text(uri), det_name=uri)


class TestBatch:
    IMAGES = [(f"image://img{i}", (1024, 1024) if i % 2 == 0 else (256, 256)) for i in range(8)]

    def _run(self, fail_rate=0.0, workers=4):
        with MockServices(fail_rate=fail_rate) as mock:
            return label_batch(
                self.IMAGES,
                ProposalConfig(),
                FilterPolicy(),
                mock.proposal_endpoint,
                mock.naming_endpoint,
                workers=workers,
                retry=FAST_RETRY,
            )

    def test_results_in_input_order(self):
        results = self._run()
        assert [r.image_uri for r in results] == [u for u, _ in self.IMAGES]

    def test_deterministic_under_failures_and_concurrency(self):
        a = self._run(fail_rate=0.2, workers=8)
        b = self._run(fail_rate=0.2, workers=2)
        c = self._run(fail_rate=0.0, workers=1)
        assert a == b == c

    def test_no_surviving_invalid_records(self):
        for res in self._run():
            assert not res.failed
            for inst in res.instances:
                assert inst.category != "unrecognized"
                assert inst.likelihood is not None and inst.likelihood >= 0.5

    def test_per_item_failure_isolated(self):
        with MockServices() as mock:
            results = label_batch(
                [("image://ok", (1024, 1024))],
                ProposalConfig(),
                FilterPolicy(),
                mock.proposal_endpoint,
                "http://127.0.0.1:9/dead",
                workers=1,
                retry=RetryPolicy(max_attempts=2, base_delay=0.01),
            )
        assert len(results) == 1
        assert results[0].failed
        assert results[0].instances == ()

    def test_size_rule_bounds_instances(self):
        cfg = ProposalConfig()
        for (uri, size), res in zip(self.IMAGES, self._run()):
            cap = cfg.top_k_large if min(size) >= cfg.small_image_cutoff else cfg.top_k_small
            assert len(res.instances) <= cap
