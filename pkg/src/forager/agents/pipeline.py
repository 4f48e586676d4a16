"""Analyst -> Critic -> Judge orchestration, output parsing, and flagging.

Each role annotates the whole session in one call; disagreement is scored
per event from the justification texts, and the strongest disagreements are
flagged for human review.
"""

from __future__ import annotations

import json
import math
import threading
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from math import sqrt
from typing import Any, Callable, Mapping, Optional, Sequence

from forager.errors import ParseFailure, PartialFailure
from forager.heuristics import DEFAULT_STOPWORDS, LabelerConfig, label_session, normalize_tokens
from forager.model import CognitiveAnnotation, CognitiveLabel, Session
from forager.agents.backends import CompletionBackend
from forager.agents.prompts import FewShot, build_prompt


class AgentRole(Enum):
    ANALYST = "Analyst"
    CRITIC = "Critic"
    JUDGE = "Judge"


@dataclass(frozen=True)
class AgentTranscript:
    """Full record of the three-stage debate for one event."""

    session_id: str
    event_index: int
    analyst_label: CognitiveLabel
    analyst_justification: str
    critic_agrees: bool
    critic_label: Optional[CognitiveLabel]
    critic_justification: str
    judge_label: CognitiveLabel
    judge_justification: str
    disagreement: float

    def __post_init__(self) -> None:
        if not self.critic_agrees:
            if self.critic_label is None or self.critic_label == self.analyst_label:
                raise ValueError(
                    "a disagreeing critic must propose a different label")
        if not 0.0 <= self.disagreement <= 1.0:
            raise ValueError(f"disagreement must be in [0, 1], got {self.disagreement}")

    def to_record(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "event_index": self.event_index,
            "analyst_label": self.analyst_label.serialize(),
            "analyst_justification": self.analyst_justification,
            "critic_agrees": self.critic_agrees,
            "critic_label": None if self.critic_label is None else self.critic_label.serialize(),
            "critic_justification": self.critic_justification,
            "judge_label": self.judge_label.serialize(),
            "judge_justification": self.judge_justification,
            "disagreement": self.disagreement,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "AgentTranscript":
        critic_label = rec.get("critic_label")
        return cls(
            session_id=rec["session_id"],
            event_index=int(rec["event_index"]),
            analyst_label=CognitiveLabel.parse(rec["analyst_label"]),
            analyst_justification=rec["analyst_justification"],
            critic_agrees=bool(rec["critic_agrees"]),
            critic_label=None if critic_label is None else CognitiveLabel.parse(critic_label),
            critic_justification=rec["critic_justification"],
            judge_label=CognitiveLabel.parse(rec["judge_label"]),
            judge_justification=rec["judge_justification"],
            disagreement=float(rec["disagreement"]),
        )


@dataclass(frozen=True)
class AgentConfig:
    flag_rate: float = 0.01
    max_workers: int = 4

    def __post_init__(self) -> None:
        if not 0.0 < self.flag_rate <= 1.0:
            raise ValueError(f"flag_rate must be in (0, 1], got {self.flag_rate}")
        if self.max_workers < 1:
            raise ValueError("max_workers must be positive")


def parse_agent_output(raw: str, expected_len: int) -> list[dict[str, Any]]:
    """Extract the first JSON array from agent text and validate its items.

    Tolerates surrounding prose and code fences; raises ParseFailure when no
    array is found, the length differs from expected_len, or a label does
    not parse.
    """
    if expected_len < 1:
        raise ValueError("expected_len must be positive")
    decoder = json.JSONDecoder()
    parsed = None
    start = raw.find("[")
    while start != -1:
        try:
            candidate, _ = decoder.raw_decode(raw, start)
        except json.JSONDecodeError:
            start = raw.find("[", start + 1)
            continue
        if isinstance(candidate, list):
            parsed = candidate
            break
        start = raw.find("[", start + 1)
    if parsed is None:
        raise ParseFailure("no JSON array found in agent output")
    if len(parsed) != expected_len:
        raise ParseFailure(
            f"expected {expected_len} items, agent returned {len(parsed)}")
    items: list[dict[str, Any]] = []
    for i, item in enumerate(parsed):
        if not isinstance(item, Mapping) or "label" not in item:
            raise ParseFailure(f"item {i} is not an object with a label")
        try:
            label = CognitiveLabel.parse(str(item["label"]))
        except ValueError as exc:
            raise ParseFailure(str(exc)) from None
        items.append({
            "label": label,
            "justification": str(item.get("justification", "")),
        })
    return items


def _tf_cosine(a: str, b: str) -> float:
    tokens_a = normalize_tokens(a, DEFAULT_STOPWORDS)
    tokens_b = normalize_tokens(b, DEFAULT_STOPWORDS)
    if not tokens_a or not tokens_b:
        return 0.0
    counts_a: dict[str, int] = {}
    counts_b: dict[str, int] = {}
    for t in tokens_a:
        counts_a[t] = counts_a.get(t, 0) + 1
    for t in tokens_b:
        counts_b[t] = counts_b.get(t, 0) + 1
    dot = sum(counts_a[t] * counts_b.get(t, 0) for t in counts_a)
    norm_a = sqrt(sum(c * c for c in counts_a.values()))
    norm_b = sqrt(sum(c * c for c in counts_b.values()))
    return dot / (norm_a * norm_b)


def disagreement_score(analyst: Mapping[str, Any], critic: Mapping[str, Any]) -> float:
    """0.0 on agreement, else 1 - tf-cosine between the two justifications."""
    if critic.get("agrees"):
        return 0.0
    similarity = _tf_cosine(
        str(analyst.get("justification", "")),
        str(critic.get("justification", "")))
    return min(1.0, max(0.0, 1.0 - similarity))


_CORRECTION = (
    "\n\nCorrection: the previous reply could not be used. Return only a JSON "
    "list with exactly {n} items, one per user action in order, each an object "
    'with the two keys "label" and "justification".')

Validator = Callable[[Sequence[Mapping[str, Any]]], None]


def _complete_and_parse(
    backend: CompletionBackend,
    role: AgentRole,
    prompt: str,
    expected_len: int,
    validate: Optional[Validator] = None,
) -> list[dict[str, Any]]:
    """One completion with a single corrective retry on unusable output."""
    attempt_prompt = prompt
    for attempt in range(2):
        raw = backend.complete(role, attempt_prompt)
        try:
            items = parse_agent_output(raw, expected_len)
            if validate is not None:
                validate(items)
            return items
        except ParseFailure:
            if attempt == 1:
                raise
            attempt_prompt = prompt + _CORRECTION.format(n=expected_len)
    raise AssertionError("unreachable")


def _serialized(items: Sequence[Mapping[str, Any]]) -> list[dict[str, str]]:
    return [
        {"label": item["label"].serialize(), "justification": item["justification"]}
        for item in items
    ]


def annotate_with_agents(
    s: Session,
    backend: CompletionBackend,
    few_shots: Sequence[FewShot] = (),
    cfg: Optional[AgentConfig] = None,
) -> tuple[list[CognitiveAnnotation], list[AgentTranscript]]:
    """Run the three-stage debate over one session.

    Raises PartialFailure with every event escalated when any stage still
    produces unusable output after its corrective retry; BackendUnavailable
    propagates from the backend.
    """
    n = len(s.events)
    escalated = [(s.id, i) for i in range(n)]
    try:
        analyst = _complete_and_parse(
            backend, AgentRole.ANALYST,
            build_prompt(AgentRole.ANALYST, s, few_shots=few_shots), n)
        critic = _complete_and_parse(
            backend, AgentRole.CRITIC,
            build_prompt(AgentRole.CRITIC, s, analyst_items=_serialized(analyst),
                         few_shots=few_shots), n)

        def check_judge(items: Sequence[Mapping[str, Any]]) -> None:
            for i, item in enumerate(items):
                allowed = {analyst[i]["label"], critic[i]["label"]}
                if item["label"] not in allowed:
                    raise ParseFailure(
                        f"judge label at {i} is outside the debated pair")

        judge = _complete_and_parse(
            backend, AgentRole.JUDGE,
            build_prompt(AgentRole.JUDGE, s, analyst_items=_serialized(analyst),
                         critic_items=_serialized(critic), few_shots=few_shots),
            n, validate=check_judge)
    except ParseFailure as exc:
        raise PartialFailure(
            f"session {s.id!r} escalated to human review: {exc}",
            escalated=escalated) from exc

    annotations: list[CognitiveAnnotation] = []
    transcripts: list[AgentTranscript] = []
    for i in range(n):
        agrees = critic[i]["label"] == analyst[i]["label"]
        critic_view = {
            "agrees": agrees,
            "label": critic[i]["label"],
            "justification": critic[i]["justification"],
        }
        score = disagreement_score(analyst[i], critic_view)
        transcripts.append(AgentTranscript(
            session_id=s.id,
            event_index=i,
            analyst_label=analyst[i]["label"],
            analyst_justification=analyst[i]["justification"],
            critic_agrees=agrees,
            critic_label=None if agrees else critic[i]["label"],
            critic_justification=critic[i]["justification"],
            judge_label=judge[i]["label"],
            judge_justification=judge[i]["justification"],
            disagreement=score,
        ))
        annotations.append(CognitiveAnnotation(
            session_id=s.id,
            event_index=i,
            label=judge[i]["label"],
            justification=judge[i]["justification"] or "no justification given",
            source="agents",
            confidence=1.0 - score,
        ))
    return annotations, transcripts


def flag_top_fraction(
    transcripts: Sequence[AgentTranscript], rate: float = 0.01,
) -> set[tuple[str, int]]:
    """Keys of the ceil(rate * N) transcripts with the highest disagreement.

    Ties break by (session_id, event_index) so the result is independent of
    input order. The fraction is taken exactly to avoid float-ceiling drift.
    """
    if not 0.0 < float(rate) <= 1.0:
        raise ValueError(f"rate must be in (0, 1], got {rate}")
    n = len(transcripts)
    if n == 0:
        return set()
    k = min(n, math.ceil(Fraction(str(rate)) * n))
    ranked = sorted(
        transcripts,
        key=lambda t: (-t.disagreement, t.session_id, t.event_index))
    return {(t.session_id, t.event_index) for t in ranked[:k]}


def heuristic_fallback_annotations(
    sessions: Sequence[Session],
    escalated: Sequence[tuple[str, int]],
    cfg: Optional[LabelerConfig] = None,
) -> list[CognitiveAnnotation]:
    """Rule-engine labels, flagged for review, for events the agents escalated."""
    by_session: dict[str, set[int]] = {}
    for session_id, event_index in escalated:
        by_session.setdefault(session_id, set()).add(event_index)
    sessions_by_id = {s.id: s for s in sessions}
    fallback: list[CognitiveAnnotation] = []
    for session_id in sorted(by_session):
        session = sessions_by_id.get(session_id)
        if session is None:
            continue
        wanted = by_session[session_id]
        fallback.extend(
            replace(ann, flagged=True)
            for ann in label_session(session, cfg)
            if ann.event_index in wanted)
    return fallback


@dataclass(frozen=True)
class CorpusResult:
    """Outcome of annotating a session list: flagged annotations, transcripts, escalations."""

    annotations: tuple[CognitiveAnnotation, ...]
    transcripts: tuple[AgentTranscript, ...]
    escalated: tuple[tuple[str, int], ...]


def annotate_corpus(
    sessions: Sequence[Session],
    backend: CompletionBackend,
    few_shots: Sequence[FewShot] = (),
    cfg: Optional[AgentConfig] = None,
    cancel: Optional[threading.Event] = None,
    on_session_done: Optional[Callable[[int], None]] = None,
) -> CorpusResult:
    """Annotate many sessions concurrently with deterministic output order.

    Escalated sessions are recorded and skipped, not fatal; a backend outage
    raises PartialFailure carrying everything completed so far. Setting the
    cancel event stops new sessions from starting between completions.
    on_session_done receives the running count of finished sessions.
    """
    cfg = cfg or AgentConfig()
    results: dict[int, tuple[list[CognitiveAnnotation], list[AgentTranscript]]] = {}
    escalations: dict[int, list[tuple[str, int]]] = {}
    progress_lock = threading.Lock()
    finished = 0

    def work(idx: int) -> None:
        nonlocal finished
        if cancel is not None and cancel.is_set():
            return
        try:
            results[idx] = annotate_with_agents(
                sessions[idx], backend, few_shots=few_shots, cfg=cfg)
        except PartialFailure as exc:
            escalations[idx] = list(exc.escalated)
        if on_session_done is not None:
            with progress_lock:
                finished += 1
                count = finished
            on_session_done(count)

    backend_error: Optional[BaseException] = None
    with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
        futures = [pool.submit(work, i) for i in range(len(sessions))]
        done, pending = wait(futures, return_when=FIRST_EXCEPTION)
        for future in done:
            if future.exception() is not None:
                backend_error = future.exception()
                if cancel is not None:
                    cancel.set()
                for p in pending:
                    p.cancel()
                break
        else:
            wait(futures)

    annotations: list[CognitiveAnnotation] = []
    transcripts: list[AgentTranscript] = []
    escalated: list[tuple[str, int]] = []
    for idx in range(len(sessions)):
        if idx in results:
            annotations.extend(results[idx][0])
            transcripts.extend(results[idx][1])
        elif idx in escalations:
            escalated.extend(escalations[idx])
    if backend_error is not None:
        raise PartialFailure(
            f"backend failed mid-run: {backend_error}",
            annotations=tuple(annotations),
            transcripts=tuple(transcripts),
            escalated=tuple(escalated),
        ) from backend_error

    flagged_keys = flag_top_fraction(transcripts, cfg.flag_rate) if transcripts else set()
    annotations = [
        replace(ann, flagged=True)
        if (ann.session_id, ann.event_index) in flagged_keys else ann
        for ann in annotations
    ]
    return CorpusResult(tuple(annotations), tuple(transcripts), tuple(escalated))
