"""Domain types shared across the pipeline: actions, events, sessions, labels, annotations.

All types are immutable values; they can be shared freely between threads.
Each type has a flat dict "record" form (``to_record`` / ``from_record``)
used by the workspace stores and the wire formats.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, ClassVar, Iterable, Mapping, Optional, Sequence


class CognitiveLabel(Enum):
    """The six foraging states an event can be tagged with."""

    FOLLOWING_SCENT = "FollowingScent"
    APPROACHING_SOURCE = "ApproachingSource"
    DIET_ENRICHMENT = "DietEnrichment"
    POOR_SCENT = "PoorScent"
    LEAVING_PATCH = "LeavingPatch"
    FORAGING_SUCCESS = "ForagingSuccess"

    def serialize(self) -> str:
        return self.value

    @classmethod
    def parse(cls, raw: str) -> "CognitiveLabel":
        try:
            return cls(raw)
        except ValueError:
            raise ValueError(f"unknown cognitive label: {raw!r}") from None


#: Canonical label order used for confusion matrices and feature layouts.
LABEL_ORDER: tuple[CognitiveLabel, ...] = tuple(CognitiveLabel)
LABEL_INDEX: Mapping[CognitiveLabel, int] = {lab: i for i, lab in enumerate(LABEL_ORDER)}

_ACTION_KINDS = ("QUERY", "CLICK", "RATE", "OTHER")


@dataclass(frozen=True)
class ActionType:
    """Kind of user action. OTHER carries a dataset-specific lowercase tag."""

    kind: str
    tag: str = ""

    QUERY: ClassVar["ActionType"]
    CLICK: ClassVar["ActionType"]
    RATE: ClassVar["ActionType"]

    def __post_init__(self) -> None:
        if self.kind not in _ACTION_KINDS:
            raise ValueError(f"unknown action kind: {self.kind!r}")
        if self.kind == "OTHER":
            if not self.tag or self.tag != self.tag.lower():
                raise ValueError("OTHER action requires a non-empty lowercase tag")
        elif self.tag:
            raise ValueError(f"tag is only valid for OTHER actions, got {self.kind}:{self.tag}")

    def serialize(self) -> str:
        return f"OTHER:{self.tag}" if self.kind == "OTHER" else self.kind

    @classmethod
    def parse(cls, raw: str) -> "ActionType":
        if raw in ("QUERY", "CLICK", "RATE"):
            return cls(raw)
        if raw.startswith("OTHER:"):
            return cls("OTHER", raw[len("OTHER:"):])
        raise ValueError(f"unknown action type: {raw!r}")


ActionType.QUERY = ActionType("QUERY")
ActionType.CLICK = ActionType("CLICK")
ActionType.RATE = ActionType("RATE")


@dataclass(frozen=True)
class Event:
    """One timestamped user action within a session.

    ``timestamp`` is UTC epoch milliseconds. ``content`` holds the query text
    for QUERY events and the clicked item identifier or title otherwise.
    ``answer_present`` records whether the results page contained a direct
    answer; it defaults to False for logs that lack results-page evidence.
    """

    session_id: str
    index: int
    timestamp: int
    action: ActionType
    content: str
    content_id: str = ""
    answer_present: bool = False
    dwell_ms: Optional[int] = None

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"event index must be >= 0, got {self.index}")
        if self.dwell_ms is not None and self.dwell_ms < 0:
            raise ValueError(f"dwell_ms must be non-negative, got {self.dwell_ms}")

    def to_record(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "index": self.index,
            "timestamp": self.timestamp,
            "action": self.action.serialize(),
            "content": self.content,
            "content_id": self.content_id,
            "answer_present": self.answer_present,
            "dwell_ms": self.dwell_ms,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "Event":
        return cls(
            session_id=rec["session_id"],
            index=int(rec["index"]),
            timestamp=int(rec["timestamp"]),
            action=ActionType.parse(rec["action"]),
            content=rec["content"],
            content_id=rec.get("content_id", ""),
            answer_present=bool(rec.get("answer_present", False)),
            dwell_ms=None if rec.get("dwell_ms") is None else int(rec["dwell_ms"]),
        )


@dataclass(frozen=True)
class Session:
    """Ordered event sequence for one user episode; the unit of annotation and forecasting."""

    id: str
    user_id: str
    events: tuple[Event, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "user_id": self.user_id,
            "events": [e.to_record() for e in self.events],
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "Session":
        return cls(
            id=rec["id"],
            user_id=rec["user_id"],
            events=tuple(Event.from_record(e) for e in rec["events"]),
        )


#: Annotation provenance, in ascending override priority.
SOURCES = ("heuristic", "agents", "human")
_SOURCE_RANK = {s: i for i, s in enumerate(SOURCES)}


@dataclass(frozen=True)
class CognitiveAnnotation:
    """A cognitive label for one event, with provenance and confidence."""

    session_id: str
    event_index: int
    label: CognitiveLabel
    justification: str
    source: str
    confidence: float
    flagged: bool = False

    def __post_init__(self) -> None:
        if self.source not in SOURCES:
            raise ValueError(f"unknown annotation source: {self.source!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        if self.source == "agents" and not self.justification.strip():
            raise ValueError("agent annotations must carry a justification")

    def to_record(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "event_index": self.event_index,
            "label": self.label.serialize(),
            "justification": self.justification,
            "source": self.source,
            "confidence": self.confidence,
            "flagged": self.flagged,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "CognitiveAnnotation":
        return cls(
            session_id=rec["session_id"],
            event_index=int(rec["event_index"]),
            label=CognitiveLabel.parse(rec["label"]),
            justification=rec.get("justification", ""),
            source=rec["source"],
            confidence=float(rec["confidence"]),
            flagged=bool(rec.get("flagged", False)),
        )


def effective_annotation(
    candidates: Iterable[CognitiveAnnotation],
) -> Optional[CognitiveAnnotation]:
    """Pick the annotation that wins under source precedence human > agents > heuristic.

    Among candidates with the same source the later one wins, so callers can
    pass records in append order.
    """
    best: Optional[CognitiveAnnotation] = None
    for ann in candidates:
        if best is None or _SOURCE_RANK[ann.source] >= _SOURCE_RANK[best.source]:
            best = ann
    return best


@dataclass(frozen=True)
class Violation:
    """One broken session or event invariant; violations are data, not failures."""

    event_index: Optional[int]
    rule: str
    message: str


def validate_session(s: Session) -> list[Violation]:
    """Check every Session/Event invariant; an empty list means the session is well formed."""
    violations: list[Violation] = []
    if not s.events:
        return [Violation(None, "non-empty", "session has no events")]
    prev_ts: Optional[int] = None
    for i, event in enumerate(s.events):
        if event.session_id != s.id:
            violations.append(Violation(
                i, "session-id-match",
                f"event session_id {event.session_id!r} differs from session id {s.id!r} at index {i}",
            ))
        if event.index != i:
            violations.append(Violation(
                i, "index-contiguity",
                f"expected event index {i}, found {event.index}",
            ))
        if prev_ts is not None and event.timestamp < prev_ts:
            violations.append(Violation(
                i, "timestamp-order", f"non-monotonic timestamp at index {i}",
            ))
        prev_ts = event.timestamp
        if event.action.kind == "QUERY" and not event.content.strip():
            violations.append(Violation(
                i, "query-content", f"empty query content at index {i}",
            ))
    return violations
