"""Prompt construction for the three annotation roles.

Every role sees the same persona, task, label schema, and session payload;
Critic and Judge additionally see the prior proposals. Section headers are
stable strings because the deterministic mock backend parses them back out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Optional, Sequence

from forager.model import CognitiveLabel, Event, Session

if TYPE_CHECKING:
    from forager.agents.pipeline import AgentRole

PERSONA = ("You are an expert in Human-Computer Interaction specializing in "
           "Information Foraging Theory.")

TASK = ("Apply a cognitive label from the provided schema to each user action "
        "in the search session.")

LABEL_DEFINITIONS: Mapping[CognitiveLabel, str] = {
    CognitiveLabel.FOLLOWING_SCENT: (
        'The user initiates or continues a search with a targeted query. '
        'Ex: "best espresso machine under $500".'),
    CognitiveLabel.APPROACHING_SOURCE: (
        'A result is clicked, indicating that the snippet or title provided a '
        'sufficiently strong scent for further investigation.'),
    CognitiveLabel.DIET_ENRICHMENT: (
        'The query is modified to broaden or narrow scope, reflecting '
        'refinement of the information need. Ex: from "laptops" to '
        '"lightweight laptops for travel".'),
    CognitiveLabel.POOR_SCENT: (
        'A new query is issued without any organic clicks, implying the patch '
        'offered no promising scent.'),
    CognitiveLabel.LEAVING_PATCH: (
        'The session ends after multiple reformulations without a successful '
        'interaction (e.g., a long click).'),
    CognitiveLabel.FORAGING_SUCCESS: (
        'A query with no clicks where the SERP contains a direct answer '
        '(e.g., featured snippet or knowledge panel).'),
}

OUTPUT_FORMAT = (
    "Output Format: Output a JSON list, where each item corresponds to a user "
    "action and contains two keys:\n"
    '  - "label": the assigned cognitive label\n'
    '  - "justification": a 1-2 sentence explanation citing evidence from the '
    "input.")

# Section headers; the mock backend locates payloads by these exact lines.
SESSION_HEADER = "Session:"
ANALYST_HEADER = "Analyst proposal:"
CRITIC_HEADER = "Critic review:"

MAX_FEW_SHOTS = 5

_ROLE_INSTRUCTIONS = {
    "Analyst": (
        "Examine the complete behavioral trace of the session and produce an "
        "initial label for each action with a step-by-step justification "
        "grounded in the data."),
    "Critic": (
        "Review the Analyst's proposal below and look for inconsistencies or "
        "alternative explanations. For each action, repeat the Analyst's "
        "label if you agree; if you disagree, you must propose a different "
        "label and provide your own counter-argument."),
    "Judge": (
        "Consider both the Analyst's proposal and the Critic's review below. "
        "For each action, make the final choice between the two proposed "
        "labels and write a summary explanation for your decision. Where the "
        "Critic agreed, keep the Analyst's label."),
}


@dataclass(frozen=True)
class FewShot:
    """One archetypal exemplar session with its reference labeling."""

    session: Session
    labels: tuple[CognitiveLabel, ...]
    justifications: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.session.events):
            raise ValueError("few-shot labels must cover every event")
        if len(self.justifications) != len(self.session.events):
            raise ValueError("few-shot justifications must cover every event")


def _event_payload(e: Event) -> dict:
    payload: dict = {
        "index": e.index,
        "timestamp": e.timestamp,
        "action": e.action.serialize(),
        "content": e.content,
        "answer_present": e.answer_present,
    }
    if e.content_id:
        payload["content_id"] = e.content_id
    if e.dwell_ms is not None:
        payload["dwell_ms"] = e.dwell_ms
    return payload


def serialize_session(s: Session) -> str:
    """Session as the JSON object the agents receive: query sequence plus click data."""
    return json.dumps(
        {
            "session_id": s.id,
            "user_id": s.user_id,
            "actions": [_event_payload(e) for e in s.events],
        },
        indent=2,
        sort_keys=True,
    )


def _fenced(payload: str) -> str:
    return f"```json\n{payload}\n```"


def _proposal_json(items: Sequence[Mapping[str, str]]) -> str:
    return json.dumps(list(items), indent=2, sort_keys=True)


def build_prompt(
    role: "AgentRole",
    s: Session,
    analyst_items: Optional[Sequence[Mapping[str, str]]] = None,
    critic_items: Optional[Sequence[Mapping[str, str]]] = None,
    few_shots: Sequence[FewShot] = (),
) -> str:
    """Assemble the full prompt for one role over one session.

    analyst_items/critic_items are the prior stages' parsed outputs, as lists
    of {"label", "justification"} dicts; they are required for Critic and
    Judge respectively.
    """
    if len(few_shots) > MAX_FEW_SHOTS:
        raise ValueError(f"at most {MAX_FEW_SHOTS} few-shot exemplars are supported")
    role_name = role.value
    if role_name in ("Critic", "Judge") and analyst_items is None:
        raise ValueError(f"{role_name} prompt requires the Analyst proposal")
    if role_name == "Judge" and critic_items is None:
        raise ValueError("Judge prompt requires the Critic review")

    parts = [
        f"Persona: {PERSONA}",
        f"Task: {TASK}",
        "Schema:\n" + "\n".join(
            f"- {label.serialize()}: {definition}"
            for label, definition in LABEL_DEFINITIONS.items()),
        f"Role: {_ROLE_INSTRUCTIONS[role_name]}",
    ]
    for i, shot in enumerate(few_shots, start=1):
        reference = _proposal_json([
            {"label": lab.serialize(), "justification": just}
            for lab, just in zip(shot.labels, shot.justifications)
        ])
        parts.append(
            f"Example {i} session:\n{_fenced(serialize_session(shot.session))}\n"
            f"Example {i} labels:\n{_fenced(reference)}")
    parts.append(f"{SESSION_HEADER}\n{_fenced(serialize_session(s))}")
    if role_name in ("Critic", "Judge"):
        parts.append(f"{ANALYST_HEADER}\n{_fenced(_proposal_json(analyst_items))}")
    if role_name == "Judge":
        parts.append(f"{CRITIC_HEADER}\n{_fenced(_proposal_json(critic_items))}")
    parts.append(OUTPUT_FORMAT)
    return "\n\n".join(parts)
