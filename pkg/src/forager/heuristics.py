"""Deterministic rule engine assigning one cognitive label per event.

The rules fire in fixed precedence order, so every event gets exactly one
label and identical sessions always produce identical annotations. The
engine doubles as a baseline labeler and as the scripted Analyst used by
the deterministic mock backend.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, FrozenSet, Mapping, Optional

from forager.errors import EmptyQuery, EmptySession
from forager.model import CognitiveAnnotation, CognitiveLabel, Session

#: Fixed small English stopword list; configurable, never auto-extended.
DEFAULT_STOPWORDS: FrozenSet[str] = frozenset(
    "a an and are as at be by for from has he in is it its of on that the to "
    "was were will with".split()
)

_PUNCT = re.compile(r"[^0-9a-z]+")

#: Stable per-rule justification strings; these surface in review and export.
RULE_JUSTIFICATIONS: Mapping[CognitiveLabel, str] = {
    CognitiveLabel.APPROACHING_SOURCE: "click-on-result",
    CognitiveLabel.FORAGING_SUCCESS: "answer-on-results-page",
    CognitiveLabel.LEAVING_PATCH: "abandoned-after-reformulations",
    CognitiveLabel.POOR_SCENT: "zero-click-query",
    CognitiveLabel.DIET_ENRICHMENT: "refined-query-with-click",
    CognitiveLabel.FOLLOWING_SCENT: "targeted-query",
}
_MAPPED_ACTION_JUSTIFICATION = "mapped-action"


class ReformulationKind(Enum):
    IDENTICAL = "Identical"
    NARROWING = "Narrowing"
    BROADENING = "Broadening"
    DRIFT = "Drift"
    NEW_TOPIC = "NewTopic"
    FIRST = "First"


@dataclass(frozen=True)
class LabelerConfig:
    """Thresholds and mappings for the rule engine."""

    leave_patch_min_queries: int = 3
    drift_jaccard_threshold: float = 0.5
    stopwords: FrozenSet[str] = DEFAULT_STOPWORDS
    long_click_ms: int = 30000
    other_action_labels: Mapping[str, CognitiveLabel] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.leave_patch_min_queries < 1:
            raise ValueError("leave_patch_min_queries must be positive")
        if not 0.0 < self.drift_jaccard_threshold <= 1.0:
            raise ValueError("drift_jaccard_threshold must be in (0, 1]")
        if self.long_click_ms < 1:
            raise ValueError("long_click_ms must be positive")
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "LabelerConfig":
        kwargs: dict[str, Any] = {}
        if "leave_patch_min_queries" in rec:
            kwargs["leave_patch_min_queries"] = int(rec["leave_patch_min_queries"])
        if "drift_jaccard_threshold" in rec:
            kwargs["drift_jaccard_threshold"] = float(rec["drift_jaccard_threshold"])
        if "stopwords" in rec:
            kwargs["stopwords"] = frozenset(str(w).lower() for w in rec["stopwords"])
        if "long_click_ms" in rec:
            kwargs["long_click_ms"] = int(rec["long_click_ms"])
        if "other_action_labels" in rec:
            kwargs["other_action_labels"] = {
                action: CognitiveLabel.parse(label)
                for action, label in dict(rec["other_action_labels"]).items()
            }
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "LabelerConfig":
        rec = json.loads(text)
        if not isinstance(rec, dict):
            raise ValueError("labeler config must be a JSON object")
        return cls.from_record(rec)


def normalize_tokens(text: str, stopwords: FrozenSet[str] = DEFAULT_STOPWORDS) -> list[str]:
    """Lowercase, strip punctuation, whitespace-tokenize, drop stopwords."""
    tokens = _PUNCT.sub(" ", text.lower()).split()
    return [t for t in tokens if t not in stopwords]


def classify_reformulation(
    prev_query: str, new_query: str, cfg: Optional[LabelerConfig] = None,
) -> ReformulationKind:
    """Relate two consecutive queries by their normalized token sets."""
    cfg = cfg or LabelerConfig()
    if not prev_query.strip() or not new_query.strip():
        raise EmptyQuery("reformulation requires two non-empty queries")
    prev = frozenset(normalize_tokens(prev_query, cfg.stopwords))
    new = frozenset(normalize_tokens(new_query, cfg.stopwords))
    if prev == new:
        return ReformulationKind.IDENTICAL
    if prev < new:
        return ReformulationKind.NARROWING
    if new < prev:
        return ReformulationKind.BROADENING
    jaccard = len(prev & new) / len(prev | new)
    if jaccard >= cfg.drift_jaccard_threshold:
        return ReformulationKind.DRIFT
    return ReformulationKind.NEW_TOPIC


def _annotation(session_id: str, index: int, label: CognitiveLabel,
                justification: str) -> CognitiveAnnotation:
    return CognitiveAnnotation(
        session_id=session_id,
        event_index=index,
        label=label,
        justification=justification,
        source="heuristic",
        confidence=1.0,
    )


def label_session(s: Session, cfg: Optional[LabelerConfig] = None) -> list[CognitiveAnnotation]:
    """Assign exactly one label to every event via the fixed rule precedence."""
    cfg = cfg or LabelerConfig()
    if not s.events:
        raise EmptySession(f"session {s.id!r} has no events")

    query_positions = [i for i, e in enumerate(s.events) if e.action.kind == "QUERY"]
    total_queries = len(query_positions)
    final_query_pos = query_positions[-1] if query_positions else None

    # clicks between this QUERY and the next QUERY (or session end)
    clicks_after: dict[int, int] = {}
    for qi, pos in enumerate(query_positions):
        end = query_positions[qi + 1] if qi + 1 < total_queries else len(s.events)
        clicks_after[pos] = sum(
            1 for e in s.events[pos + 1:end] if e.action.kind == "CLICK")

    annotations: list[CognitiveAnnotation] = []
    prev_query_content: Optional[str] = None
    success_seen = False
    for i, event in enumerate(s.events):
        if event.action.kind == "CLICK":
            label = CognitiveLabel.APPROACHING_SOURCE
            justification = RULE_JUSTIFICATIONS[label]
            # long click (or click without dwell data) counts as a success interaction
            if event.dwell_ms is None or event.dwell_ms >= cfg.long_click_ms:
                success_seen = True
        elif event.action.kind == "QUERY":
            reformulation = ReformulationKind.FIRST
            if prev_query_content is not None:
                reformulation = classify_reformulation(
                    prev_query_content, event.content, cfg)
            prev_query_content = event.content
            zero_click = clicks_after[i] == 0
            if zero_click and event.answer_present:
                label = CognitiveLabel.FORAGING_SUCCESS
                success_seen = True
            elif (zero_click and i == final_query_pos and not success_seen
                    and total_queries >= cfg.leave_patch_min_queries):
                label = CognitiveLabel.LEAVING_PATCH
            elif zero_click:
                label = CognitiveLabel.POOR_SCENT
            elif reformulation in (ReformulationKind.NARROWING,
                                   ReformulationKind.BROADENING):
                label = CognitiveLabel.DIET_ENRICHMENT
            else:
                label = CognitiveLabel.FOLLOWING_SCENT
            justification = RULE_JUSTIFICATIONS[label]
        else:
            label = cfg.other_action_labels.get(
                event.action.serialize(),
                cfg.other_action_labels.get(event.action.kind,
                                            CognitiveLabel.FOLLOWING_SCENT))
            justification = _MAPPED_ACTION_JUSTIFICATION
        annotations.append(_annotation(s.id, i, label, justification))
    return annotations
