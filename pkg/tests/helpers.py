"""Shared builders for events, sessions, and annotations used across the suite."""

from __future__ import annotations

from typing import Optional

from forager.model import ActionType, CognitiveAnnotation, CognitiveLabel, Event, Session

FS = CognitiveLabel.FOLLOWING_SCENT
AS = CognitiveLabel.APPROACHING_SOURCE
DE = CognitiveLabel.DIET_ENRICHMENT
PS = CognitiveLabel.POOR_SCENT
LP = CognitiveLabel.LEAVING_PATCH
FG = CognitiveLabel.FORAGING_SUCCESS


def q(sid: str, index: int, ts: int, text: str, answer: bool = False) -> Event:
    """A QUERY event."""
    return Event(session_id=sid, index=index, timestamp=ts,
                 action=ActionType.QUERY, content=text, answer_present=answer)


def c(sid: str, index: int, ts: int, content: str = "result page",
      dwell: Optional[int] = None, cid: str = "") -> Event:
    """A CLICK event; dwell None models a log without dwell data."""
    return Event(session_id=sid, index=index, timestamp=ts,
                 action=ActionType.CLICK, content=content, content_id=cid,
                 dwell_ms=dwell)


def sess(sid: str, *events: Event, user: str = "") -> Session:
    return Session(id=sid, user_id=user or f"user-{sid}", events=events)


def ann(sid: str, idx: int, label: CognitiveLabel, source: str = "heuristic",
        justification: str = "rule", confidence: float = 1.0,
        flagged: bool = False) -> CognitiveAnnotation:
    return CognitiveAnnotation(session_id=sid, event_index=idx, label=label,
                               justification=justification, source=source,
                               confidence=confidence, flagged=flagged)


def labels_of(annotations) -> list[CognitiveLabel]:
    return [a.label for a in annotations]
