import json

import pytest

from gridsentry.errors import ToolkitError
from gridsentry.llm import (
    ChatClient,
    ChatClientConfig,
    MockFixtureClient,
    RulesMockClient,
    build_prompts,
    detect_llm,
    parse_response,
    serialize_rules,
)
from gridsentry.records import Label
from gridsentry.rules import Level, RuleSet, detect_batch, verdicts_to_predictions
from gridsentry.simulate import make_eval_set

FULL = RuleSet.for_level(Level.FULL)
PARTIAL = RuleSet.for_level(Level.PARTIAL)
WITHOUT = RuleSet.for_level(Level.WITHOUT)


def sv_eval(seed=3):
    return make_eval_set("SV", anomalies=30, normals=10, seed=seed)


class TestSerializeRules:
    def test_sentence_counts_per_level(self):
        assert serialize_rules(WITHOUT, "GOOSE") == ""
        assert serialize_rules(WITHOUT, "SV") == ""
        assert len(serialize_rules(PARTIAL, "GOOSE").splitlines()) == 4
        assert len(serialize_rules(FULL, "GOOSE").splitlines()) == 6
        assert len(serialize_rules(PARTIAL, "SV").splitlines()) == 5
        assert len(serialize_rules(FULL, "SV").splitlines()) == 6

    def test_numbering_and_content(self):
        text = serialize_rules(FULL, "SV")
        lines = text.splitlines()
        assert [line.split(".")[0] for line in lines] == [str(i) for i in range(1, 7)]
        assert 'The range of "smpCnt" is from 0 to 4799.' in lines[0]
        assert "208 microseconds" in text
        assert "2.083 ms" in text

    def test_goose_full_text(self):
        text = serialize_rules(FULL, "GOOSE")
        assert '"sqNum" should be increased every time' in text
        assert "10 packets" in text and "10 s" in text
        assert "previously seen combination" in text  # replay clause, full only
        assert "previously seen combination" not in serialize_rules(PARTIAL, "GOOSE")


class TestBuildPrompts:
    def test_windows_partition_dataset(self):
        ds = sv_eval()
        cfg = ChatClientConfig(window_size=20)
        bundles = build_prompts(ds, FULL, cfg)
        spans = [b.window for b in bundles]
        assert sum(length for _, length in spans) == len(ds)
        assert spans[0][0] == 0
        for (s0, l0), (s1, _) in zip(spans, spans[1:]):
            assert s1 == s0 + l0
        assert all(length <= 20 for _, length in spans)

    def test_prompt_determinism(self):
        ds = sv_eval()
        cfg = ChatClientConfig(window_size=20)
        a = build_prompts(ds, FULL, cfg)
        b = build_prompts(ds, FULL, cfg)
        assert [x.user_text() for x in a] == [y.user_text() for y in b]

    def test_table_has_one_row_per_record(self):
        ds = sv_eval()
        bundle = build_prompts(ds, FULL, ChatClientConfig(window_size=20))[0]
        assert len(bundle.records_text.splitlines()) == 1 + bundle.window[1]


class TestParseResponse:
    def test_plain_json(self):
        r = parse_response('{"anomalies": [1, 3]}', 20)
        assert r.anomalous_indices == frozenset({1, 3})
        assert r.warnings == []

    def test_fenced_and_chatty(self):
        raw = 'Sure! Here is my answer:\n```json\n{"anomalies": [0]}\n```\nDone.'
        assert parse_response(raw, 5).anomalous_indices == frozenset({0})

    def test_out_of_range_dropped_with_warning(self):
        r = parse_response('{"anomalies": [2, 99, -1]}', 10)
        assert r.anomalous_indices == frozenset({2})
        assert len(r.warnings) == 2

    def test_non_integer_dropped(self):
        r = parse_response('{"anomalies": [1, "two", true]}', 10)
        assert r.anomalous_indices == frozenset({1})
        assert len(r.warnings) == 2

    def test_unparseable_scores_all_normal(self):
        r = parse_response("I cannot help with that.", 10)
        assert r.anomalous_indices == frozenset()
        assert r.warnings and "unparseable" in r.warnings[0]


class TestClients:
    def test_fixture_client(self, tmp_path):
        (tmp_path / "window_0.txt").write_text('{"anomalies": [2]}')
        ds = sv_eval()
        cfg = ChatClientConfig(window_size=len(ds))
        report = detect_llm(ds, FULL, cfg, MockFixtureClient(str(tmp_path)))
        assert report.predictions[2] is True
        assert sum(report.predictions) == 1

    def test_fixture_client_missing_file(self, tmp_path):
        client = MockFixtureClient(str(tmp_path))
        bundle = build_prompts(sv_eval(), FULL, ChatClientConfig(window_size=20))[0]
        with pytest.raises(ToolkitError):
            client.complete(bundle, 0)

    def test_rules_mock_matches_engine(self):
        for seed in (1, 2, 3):
            for protocol, anomalies, normals in (("GOOSE", 55, 25), ("SV", 60, 20)):
                ds = make_eval_set(protocol, anomalies=anomalies, normals=normals,
                                   seed=seed)
                cfg = ChatClientConfig(window_size=20)
                report = detect_llm(ds, FULL, cfg, RulesMockClient(ds, FULL))
                expected = verdicts_to_predictions(detect_batch(ds, FULL), len(ds))
                assert report.predictions == expected
                assert report.failed_windows == []


class _FlakyClient(ChatClient):
    def __init__(self, fail_times):
        self.fail_times = fail_times
        self.calls = 0

    def complete(self, bundle, window_id):
        self.calls += 1
        if self.calls <= self.fail_times:
            raise RuntimeError("transient")
        return '{"anomalies": []}'


class _AlwaysDownClient(ChatClient):
    def complete(self, bundle, window_id):
        raise RuntimeError("down")


class TestDetectLlm:
    def test_retries_recover(self):
        ds = sv_eval()
        cfg = ChatClientConfig(window_size=len(ds), max_retries=2)
        report = detect_llm(ds, FULL, cfg, _FlakyClient(fail_times=2))
        assert report.failed_windows == []
        assert report.predictions == [False] * len(ds)

    def test_exhausted_retries_score_all_normal(self):
        ds = sv_eval()
        cfg = ChatClientConfig(window_size=20, max_retries=1)
        report = detect_llm(ds, FULL, cfg, _AlwaysDownClient())
        assert report.failed_windows == list(range((len(ds) + 19) // 20))
        assert report.predictions == [False] * len(ds)
        assert report.warnings

    def test_transcript_written(self, tmp_path):
        ds = sv_eval()
        cfg = ChatClientConfig(window_size=20)
        path = tmp_path / "transcript.jsonl"
        detect_llm(ds, FULL, cfg, RulesMockClient(ds, FULL), transcript_path=str(path))
        lines = path.read_text().splitlines()
        assert len(lines) == (len(ds) + 19) // 20
        entry = json.loads(lines[0])
        assert {"window", "attempt", "system", "user", "reply", "flagged"} <= set(entry)
