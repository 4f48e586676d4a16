"""Log parsing, column mapping, timestamp coercion, and session segmentation."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forager.errors import MalformedInput
from forager.ingest import (
    ColumnMapping,
    ParseResult,
    RawRecord,
    SegmentationPolicy,
    parse_log,
    segment_sessions,
)
from forager.model import ActionType, validate_session

MINUTE = 60 * 1000


@pytest.fixture
def plain_mapping() -> ColumnMapping:
    return ColumnMapping(user_id_col="uid", timestamp_col="ts", content_col="q",
                         timestamp_format="epoch_s")


class TestColumnMapping:
    def test_requires_core_columns(self):
        with pytest.raises(ValueError):
            ColumnMapping(user_id_col="", timestamp_col="ts", content_col="q")

    def test_rejects_unknown_timestamp_format(self):
        with pytest.raises(ValueError):
            ColumnMapping(user_id_col="u", timestamp_col="t", content_col="q",
                          timestamp_format="unix")

    def test_from_record_rejects_unknown_fields(self):
        with pytest.raises(MalformedInput, match="unknown mapping fields"):
            ColumnMapping.from_record({
                "user_id_col": "u", "timestamp_col": "t", "content_col": "q",
                "sessionize": True,
            })

    def test_from_record_reports_missing_fields(self):
        with pytest.raises(MalformedInput, match="missing required fields"):
            ColumnMapping.from_record({"user_id_col": "u"})

    def test_from_json_round_trip(self):
        text = json.dumps({
            "user_id_col": "u", "timestamp_col": "t", "content_col": "q",
            "action_col": "a", "action_value_map": {"s": "QUERY", "k": "CLICK"},
        })
        mapping = ColumnMapping.from_json(text)
        assert mapping.action_value_map == {
            "s": ActionType.QUERY, "k": ActionType.CLICK}

    def test_from_json_rejects_non_object(self):
        with pytest.raises(MalformedInput):
            ColumnMapping.from_json("[1, 2]")

    def test_columns_in_declaration_order(self):
        mapping = ColumnMapping(user_id_col="u", timestamp_col="t",
                                content_col="q", session_id_col="sid",
                                content_id_col="doc")
        assert mapping.columns() == ["u", "t", "q", "sid", "doc"]


class TestParseLog:
    def test_epoch_seconds_scaled_to_milliseconds(self, plain_mapping):
        data = b"uid,ts,q\nu1,1136073600,laptops\n"
        result = parse_log(data, "csv", plain_mapping)
        assert len(result.records) == 1
        record = result.records[0]
        assert record.timestamp == 1136073600000
        assert record.action == ActionType.QUERY
        assert record.content == "laptops"

    def test_iso8601_zulu_and_naive(self):
        mapping = ColumnMapping(user_id_col="uid", timestamp_col="ts",
                                content_col="q", timestamp_format="iso8601")
        data = (b"uid,ts,q\n"
                b"u1,2006-01-01T00:00:00Z,a\n"
                b"u1,2006-01-01T00:00:01,b\n")
        result = parse_log(data, "csv", mapping)
        assert [r.timestamp for r in result.records] == [
            1136073600000, 1136073601000]

    def test_missing_mapped_column_is_malformed(self, plain_mapping):
        data = b"uid,ts,text\nu1,5,laptops\n"
        with pytest.raises(MalformedInput, match="missing mapped columns"):
            parse_log(data, "csv", plain_mapping)

    def test_csv_without_header_rows_is_malformed(self, plain_mapping):
        with pytest.raises(MalformedInput):
            parse_log(b"", "csv", plain_mapping)

    def test_undecodable_stream_is_malformed(self, plain_mapping):
        with pytest.raises(MalformedInput, match="UTF-8"):
            parse_log(b"\xff\xfe\x00", "csv", plain_mapping)

    def test_unknown_format_is_malformed(self, plain_mapping):
        with pytest.raises(MalformedInput, match="unknown log format"):
            parse_log(b"uid,ts,q\n", "tsv", plain_mapping)

    def test_json_bad_timestamp_rejected_not_fatal(self, plain_mapping):
        doc = json.dumps([
            {"uid": "u1", "ts": 10, "q": "a"},
            {"uid": "u1", "ts": "soon", "q": "b"},
            {"uid": "u1", "ts": 30, "q": "c"},
        ]).encode()
        result = parse_log(doc, "json", plain_mapping)
        assert len(result.records) == 2
        assert result.rejected_total == 1
        assert len(result.rejects) == 1

    def test_json_must_be_an_array(self, plain_mapping):
        with pytest.raises(MalformedInput, match="array"):
            parse_log(b'{"uid": "u1"}', "json", plain_mapping)

    def test_json_non_object_row_rejected(self, plain_mapping):
        doc = json.dumps([{"uid": "u1", "ts": 10, "q": "a"}, 7]).encode()
        result = parse_log(doc, "json", plain_mapping)
        assert result.rejected_total == 1
        assert result.rejects[0].reason == "row is not a flat object"

    def test_non_finite_timestamps_rejected(self, plain_mapping):
        data = b"uid,ts,q\nu1,nan,a\nu1,inf,b\nu1,5,c\n"
        result = parse_log(data, "csv", plain_mapping)
        assert len(result.records) == 1
        assert result.rejected_total == 2

    def test_empty_user_id_rejected(self, plain_mapping):
        data = b"uid,ts,q\n ,5,a\n"
        result = parse_log(data, "csv", plain_mapping)
        assert result.rejected_total == 1
        assert "empty user id" in result.rejects[0].reason

    def test_empty_query_content_rejected(self, plain_mapping):
        data = b"uid,ts,q\nu1,5,   \n"
        result = parse_log(data, "csv", plain_mapping)
        assert result.rejected_total == 1
        assert "empty query content" in result.rejects[0].reason

    def test_click_rows_may_have_empty_content(self):
        mapping = ColumnMapping(
            user_id_col="uid", timestamp_col="ts", content_col="q",
            action_col="a", action_value_map={"c": ActionType.CLICK})
        result = parse_log(b"uid,ts,a,q\nu1,5,c,\n", "csv", mapping)
        assert len(result.records) == 1
        assert result.records[0].content == ""

    def test_unmapped_action_value_rejected(self):
        mapping = ColumnMapping(
            user_id_col="uid", timestamp_col="ts", content_col="q",
            action_col="a", action_value_map={"q": ActionType.QUERY})
        result = parse_log(b"uid,ts,a,q\nu1,5,zzz,laptops\n", "csv", mapping)
        assert result.rejected_total == 1
        assert "unmapped action value" in result.rejects[0].reason

    def test_absent_action_column_defaults_to_query(self, plain_mapping):
        result = parse_log(b"uid,ts,q\nu1,5,laptops\n", "csv", plain_mapping)
        assert result.records[0].action == ActionType.QUERY

    def test_answer_flag_words(self):
        mapping = ColumnMapping(
            user_id_col="uid", timestamp_col="ts", content_col="q",
            answer_present_col="ans")
        data = b"uid,ts,q,ans\nu1,1,a,true\nu1,2,b,0\nu1,3,c,\nu1,4,d,maybe\n"
        result = parse_log(data, "csv", mapping)
        assert [r.answer_present for r in result.records] == [True, False, False]
        assert result.rejected_total == 1

    def test_short_csv_row_rejected(self, plain_mapping):
        data = b"uid,ts,q\nu1,5\nu1,6,b\n"
        result = parse_log(data, "csv", plain_mapping)
        assert len(result.records) == 1
        assert result.rejected_total == 1

    def test_reject_report_capped_with_exact_total(self, plain_mapping):
        rows = b"".join(b",%d,bad\n" % i for i in range(1005))
        data = b"uid,ts,q\n" + rows + b"u1,9,good\n"
        result = parse_log(data, "csv", plain_mapping)
        assert len(result.records) == 1
        assert result.rejected_total == 1005
        assert len(result.rejects) == 1000


def _rec(user: str, ts: int, row: int = 0, key: str | None = None) -> RawRecord:
    return RawRecord(row=row, user_id=user, timestamp=ts,
                     action=ActionType.QUERY, content=f"query {row}",
                     session_key=key)


class TestSegmentSessions:
    def test_gap_split(self):
        records = [_rec("u1", 0, 0), _rec("u1", 10 * MINUTE, 1),
                   _rec("u1", 50 * MINUTE, 2)]
        sessions = segment_sessions(
            records, SegmentationPolicy(mode="by_inactivity", gap_ms=30 * MINUTE))
        by_id = {s.id: s for s in sessions}
        assert set(by_id) == {"u1#0", "u1#1"}
        assert len(by_id["u1#0"].events) == 2
        assert len(by_id["u1#1"].events) == 1

    def test_gap_exactly_at_threshold_stays_together(self):
        records = [_rec("u1", 0, 0), _rec("u1", 30 * MINUTE, 1)]
        sessions = segment_sessions(
            records, SegmentationPolicy(gap_ms=30 * MINUTE))
        assert len(sessions) == 1

    def test_by_session_id_grouping(self):
        records = [_rec("u1", 0, 0, "s1"), _rec("u1", 5, 1, "s1"),
                   _rec("u1", 9, 2, "s2")]
        sessions = segment_sessions(records, SegmentationPolicy(mode="by_session_id"))
        sizes = {s.id: len(s.events) for s in sessions}
        assert sizes == {"s1": 2, "s2": 1}

    def test_by_session_id_requires_key(self):
        with pytest.raises(MalformedInput, match="session id column"):
            segment_sessions([_rec("u1", 0)],
                             SegmentationPolicy(mode="by_session_id"))

    def test_single_record(self):
        sessions = segment_sessions([_rec("u1", 7)], SegmentationPolicy())
        assert len(sessions) == 1
        assert sessions[0].id == "u1#0"
        assert len(sessions[0].events) == 1

    def test_permutation_invariance(self):
        records = [_rec("u1", ts, i) for i, ts in
                   enumerate([0, 5 * MINUTE, 90 * MINUTE, 95 * MINUTE])]
        forward = segment_sessions(records, SegmentationPolicy())
        backward = segment_sessions(records[::-1], SegmentationPolicy())
        assert sorted(forward, key=lambda s: s.id) == sorted(
            backward, key=lambda s: s.id)

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            SegmentationPolicy(mode="per_day")
        with pytest.raises(ValueError):
            SegmentationPolicy(gap_ms=0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(
        st.tuples(st.sampled_from(["u1", "u2", "u3"]),
                  st.integers(min_value=0, max_value=10 ** 7)),
        min_size=1, max_size=40))
    def test_gap_segmentation_is_a_valid_partition(self, raw):
        records = [_rec(user, ts, row) for row, (user, ts) in enumerate(raw)]
        gap = 1000
        sessions = segment_sessions(
            records, SegmentationPolicy(mode="by_inactivity", gap_ms=gap))
        assert sum(len(s.events) for s in sessions) == len(records)
        per_user: dict[str, set[int]] = {}
        for session in sessions:
            assert validate_session(session) == []
            user, k = session.id.rsplit("#", 1)
            assert session.user_id == user
            per_user.setdefault(user, set()).add(int(k))
            timestamps = [e.timestamp for e in session.events]
            assert all(b - a <= gap for a, b in zip(timestamps, timestamps[1:]))
        for ks in per_user.values():
            assert ks == set(range(len(ks)))


class TestEndToEnd:
    def test_sample_log_sessions(self, mapping):
        from conftest import SAMPLE_CSV

        result = parse_log(SAMPLE_CSV, "csv", mapping)
        assert isinstance(result, ParseResult)
        assert result.rejected_total == 0
        sessions = segment_sessions(list(result.records), SegmentationPolicy())
        sizes = {s.id: len(s.events) for s in sessions}
        assert sizes == {"u1#0": 5, "u2#0": 1, "u2#1": 3}
        for session in sessions:
            assert validate_session(session) == []
