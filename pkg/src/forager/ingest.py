"""Parse raw interaction logs into validated Sessions.

The caller describes their log with a ColumnMapping, parse_log turns the
byte stream into normalized records plus a rejects report, and
segment_sessions groups records into Sessions either by an explicit id
column or by inactivity gaps.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Mapping, Optional

from forager.errors import MalformedInput
from forager.model import ActionType, Event, Session

TIMESTAMP_FORMATS = ("epoch_s", "epoch_ms", "iso8601")
SEGMENTATION_MODES = ("by_session_id", "by_inactivity")

#: Conventional web-log session cutoff; configurable per SegmentationPolicy.
DEFAULT_GAP_MS = 30 * 60 * 1000

#: Rejected rows kept in the report; the total count is always exact.
REJECT_REPORT_CAP = 1000

_TRUE_WORDS = frozenset(("true", "1", "yes", "y", "t"))
_FALSE_WORDS = frozenset(("false", "0", "no", "n", "f", ""))


@dataclass(frozen=True)
class ColumnMapping:
    """Names the log columns that feed each Event field."""

    user_id_col: str
    timestamp_col: str
    content_col: str
    timestamp_format: str = "epoch_ms"
    session_id_col: Optional[str] = None
    action_col: Optional[str] = None
    action_value_map: Mapping[str, ActionType] = field(default_factory=dict)
    content_id_col: Optional[str] = None
    answer_present_col: Optional[str] = None

    def __post_init__(self) -> None:
        for name, value in (
            ("user_id_col", self.user_id_col),
            ("timestamp_col", self.timestamp_col),
            ("content_col", self.content_col),
        ):
            if not value:
                raise ValueError(f"{name} is required")
        if self.timestamp_format not in TIMESTAMP_FORMATS:
            raise ValueError(f"unknown timestamp_format: {self.timestamp_format!r}")

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "ColumnMapping":
        known = {
            "user_id_col", "timestamp_col", "content_col", "timestamp_format",
            "session_id_col", "action_col", "action_value_map",
            "content_id_col", "answer_present_col",
        }
        unknown = set(rec) - known
        if unknown:
            raise MalformedInput(f"unknown mapping fields: {sorted(unknown)}")
        missing = [k for k in ("user_id_col", "timestamp_col", "content_col") if not rec.get(k)]
        if missing:
            raise MalformedInput(f"mapping is missing required fields: {missing}")
        try:
            value_map = {
                raw: ActionType.parse(serialized)
                for raw, serialized in dict(rec.get("action_value_map") or {}).items()
            }
            return cls(
                user_id_col=rec["user_id_col"],
                timestamp_col=rec["timestamp_col"],
                content_col=rec["content_col"],
                timestamp_format=rec.get("timestamp_format", "epoch_ms"),
                session_id_col=rec.get("session_id_col"),
                action_col=rec.get("action_col"),
                action_value_map=value_map,
                content_id_col=rec.get("content_id_col"),
                answer_present_col=rec.get("answer_present_col"),
            )
        except ValueError as exc:
            raise MalformedInput(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "ColumnMapping":
        try:
            rec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"mapping is not valid JSON: {exc}") from None
        if not isinstance(rec, dict):
            raise MalformedInput("mapping document must be a JSON object")
        return cls.from_record(rec)

    def columns(self) -> list[str]:
        """All column names the mapping references, in declaration order."""
        cols = [self.user_id_col, self.timestamp_col, self.content_col]
        for col in (self.session_id_col, self.action_col,
                    self.content_id_col, self.answer_present_col):
            if col:
                cols.append(col)
        return cols


@dataclass(frozen=True)
class SegmentationPolicy:
    """How to cut a record stream into sessions."""

    mode: str = "by_inactivity"
    gap_ms: int = DEFAULT_GAP_MS

    def __post_init__(self) -> None:
        if self.mode not in SEGMENTATION_MODES:
            raise ValueError(f"unknown segmentation mode: {self.mode!r}")
        if self.gap_ms <= 0:
            raise ValueError(f"gap_ms must be positive, got {self.gap_ms}")


@dataclass(frozen=True)
class RawRecord:
    """One normalized log row, prior to session assignment."""

    row: int
    user_id: str
    timestamp: int
    action: ActionType
    content: str
    content_id: str = ""
    answer_present: bool = False
    session_key: Optional[str] = None


@dataclass(frozen=True)
class RejectedRow:
    row: int
    reason: str


@dataclass(frozen=True)
class ParseResult:
    """Accepted records plus the rejects report (capped, with an exact total)."""

    records: tuple[RawRecord, ...]
    rejects: tuple[RejectedRow, ...]
    rejected_total: int


def _parse_timestamp(raw: Any, fmt: str) -> int:
    """Coerce one timestamp cell to UTC epoch milliseconds."""
    if fmt == "iso8601":
        if not isinstance(raw, str) or not raw.strip():
            raise ValueError(f"not an iso8601 timestamp: {raw!r}")
        text = raw.strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(round(dt.timestamp() * 1000))
    value = float(raw)
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError(f"non-finite timestamp: {raw!r}")
    return int(round(value * 1000)) if fmt == "epoch_s" else int(round(value))


def _parse_flag(raw: Any) -> bool:
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, (int, float)) and raw in (0, 1):
        return bool(raw)
    if isinstance(raw, str):
        word = raw.strip().lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
    raise ValueError(f"not a boolean flag: {raw!r}")


def _cell(obj: Mapping[str, Any], col: str) -> Any:
    if col not in obj:
        raise ValueError(f"missing column {col!r}")
    return obj[col]


def _coerce_row(row_no: int, obj: Mapping[str, Any], mapping: ColumnMapping) -> RawRecord:
    """Map one row/object to a RawRecord; ValueError marks it rejected."""
    user_id = str(_cell(obj, mapping.user_id_col)).strip()
    if not user_id:
        raise ValueError("empty user id")
    timestamp = _parse_timestamp(_cell(obj, mapping.timestamp_col), mapping.timestamp_format)
    if mapping.action_col is None:
        action = ActionType.QUERY
    else:
        raw_action = str(_cell(obj, mapping.action_col)).strip()
        if raw_action not in mapping.action_value_map:
            raise ValueError(f"unmapped action value {raw_action!r}")
        action = mapping.action_value_map[raw_action]
    content_raw = _cell(obj, mapping.content_col)
    content = "" if content_raw is None else str(content_raw).strip()
    if action.kind == "QUERY" and not content:
        raise ValueError("empty query content")
    content_id = ""
    if mapping.content_id_col is not None:
        cell = obj.get(mapping.content_id_col)
        content_id = "" if cell is None else str(cell).strip()
    answer_present = False
    if mapping.answer_present_col is not None:
        answer_present = _parse_flag(obj.get(mapping.answer_present_col, False))
    session_key = None
    if mapping.session_id_col is not None:
        key = str(_cell(obj, mapping.session_id_col)).strip()
        if not key:
            raise ValueError("empty session id")
        session_key = key
    return RawRecord(
        row=row_no,
        user_id=user_id,
        timestamp=timestamp,
        action=action,
        content=content,
        content_id=content_id,
        answer_present=answer_present,
        session_key=session_key,
    )


def _iter_csv(data: bytes, mapping: ColumnMapping):
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedInput(f"log is not valid UTF-8: {exc}") from None
    reader = csv.DictReader(io.StringIO(text, newline=""))
    if reader.fieldnames is None:
        raise MalformedInput("CSV log has no header row")
    missing = [c for c in mapping.columns() if c not in reader.fieldnames]
    if missing:
        raise MalformedInput(f"CSV header is missing mapped columns: {missing}")
    for obj in reader:
        # DictReader maps short rows to None cells; coercion rejects them.
        yield {k: v for k, v in obj.items() if k is not None}


def _iter_json(data: bytes, mapping: ColumnMapping):
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedInput(f"log is not valid UTF-8: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"log is not valid JSON: {exc}") from None
    if not isinstance(doc, list):
        raise MalformedInput("JSON log must be an array of flat objects")
    for obj in doc:
        yield obj


def parse_log(data: bytes, format: str, mapping: ColumnMapping) -> ParseResult:
    """Parse a CSV or JSON log into normalized records.

    Rows that fail type coercion land in the rejects report with a reason;
    only structurally unusable files raise MalformedInput.
    """
    if format == "csv":
        rows = _iter_csv(data, mapping)
    elif format == "json":
        rows = _iter_json(data, mapping)
    else:
        raise MalformedInput(f"unknown log format: {format!r}")

    records: list[RawRecord] = []
    rejects: list[RejectedRow] = []
    rejected_total = 0
    for row_no, obj in enumerate(rows):
        if not isinstance(obj, Mapping):
            reason = "row is not a flat object"
        else:
            try:
                records.append(_coerce_row(row_no, obj, mapping))
                continue
            except (ValueError, TypeError) as exc:
                reason = str(exc)
        rejected_total += 1
        if len(rejects) < REJECT_REPORT_CAP:
            rejects.append(RejectedRow(row=row_no, reason=reason))
    return ParseResult(tuple(records), tuple(rejects), rejected_total)


def _build_session(session_id: str, user_id: str, group: list[RawRecord]) -> Session:
    ordered = sorted(group, key=lambda r: r.timestamp)
    events = tuple(
        Event(
            session_id=session_id,
            index=i,
            timestamp=rec.timestamp,
            action=rec.action,
            content=rec.content,
            content_id=rec.content_id,
            answer_present=rec.answer_present,
        )
        for i, rec in enumerate(ordered)
    )
    return Session(id=session_id, user_id=user_id, events=events)


def segment_sessions(records: list[RawRecord], policy: SegmentationPolicy) -> list[Session]:
    """Group records into Sessions; every record lands in exactly one session."""
    if policy.mode == "by_session_id":
        groups: dict[str, list[RawRecord]] = {}
        for rec in records:
            if rec.session_key is None:
                raise MalformedInput(
                    "by_session_id segmentation requires a session id column in the mapping")
            groups.setdefault(rec.session_key, []).append(rec)
        return [_build_session(key, group[0].user_id, group)
                for key, group in groups.items()]

    by_user: dict[str, list[RawRecord]] = {}
    for rec in records:
        by_user.setdefault(rec.user_id, []).append(rec)
    sessions: list[Session] = []
    for user_id, group in by_user.items():
        ordered = sorted(group, key=lambda r: r.timestamp)
        k = 0
        segment: list[RawRecord] = [ordered[0]]
        for rec in ordered[1:]:
            if rec.timestamp - segment[-1].timestamp > policy.gap_ms:
                sessions.append(_build_session(f"{user_id}#{k}", user_id, segment))
                k += 1
                segment = [rec]
            else:
                segment.append(rec)
        sessions.append(_build_session(f"{user_id}#{k}", user_id, segment))
    return sessions
