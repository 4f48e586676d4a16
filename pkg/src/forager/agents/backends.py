"""Completion backends: a real HTTP chat-completion client and a pure mock.

The mock backend re-parses the structured prompt, runs the deterministic
rule engine as its Analyst, and scripts Critic disputes from a policy
document, so the whole pipeline is reproducible without network access.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from typing import Any, FrozenSet, Mapping, Optional, Protocol, Sequence

import requests

from forager.errors import BackendUnavailable, MalformedInput
from forager.heuristics import LabelerConfig, label_session
from forager.model import Session
from forager.agents.prompts import ANALYST_HEADER, CRITIC_HEADER, SESSION_HEADER


class CompletionBackend(Protocol):
    def complete(self, role: "AgentRole", prompt: str) -> str: ...  # noqa: F821


@dataclass(frozen=True)
class HttpBackendConfig:
    """Chat-completion endpoint and per-role model assignments."""

    endpoint: str
    analyst_model: str = "claude-3-5-sonnet"
    critic_model: str = "gpt-4o"
    judge_model: str = "gpt-4o"
    token_env: str = "FORAGER_API_TOKEN"
    timeout_s: float = 60.0
    max_attempts: int = 3
    backoff_s: float = 0.5


class HttpBackend:
    """JSON-over-HTTP chat-completion client with bounded retries."""

    def __init__(self, config: HttpBackendConfig) -> None:
        self._config = config
        self._session = requests.Session()

    def _model_for(self, role: "AgentRole") -> str:  # noqa: F821
        return {
            "Analyst": self._config.analyst_model,
            "Critic": self._config.critic_model,
            "Judge": self._config.judge_model,
        }[role.value]

    def complete(self, role: "AgentRole", prompt: str) -> str:  # noqa: F821
        cfg = self._config
        headers = {"Content-Type": "application/json"}
        # credentials come from the environment, never from config files
        token = os.environ.get(cfg.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": self._model_for(role),
            "messages": [{"role": "user", "content": prompt}],
        }
        last_error = "no attempts made"
        for attempt in range(cfg.max_attempts):
            if attempt:
                time.sleep(cfg.backoff_s * 2 ** (attempt - 1))
            try:
                response = self._session.post(
                    cfg.endpoint, json=body, headers=headers, timeout=cfg.timeout_s)
            except requests.RequestException as exc:
                last_error = f"request failed: {exc}"
                continue
            if response.status_code == 429 or response.status_code >= 500:
                last_error = f"retryable status {response.status_code}"
                continue
            if response.status_code != 200:
                raise BackendUnavailable(
                    f"backend returned status {response.status_code}: {response.text[:200]}")
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise BackendUnavailable("unexpected completion response shape") from None
        raise BackendUnavailable(
            f"backend unavailable after {cfg.max_attempts} attempts: {last_error}")


@dataclass(frozen=True)
class MockDispute:
    """One scripted Critic dispute; unset predicates match everything."""

    propose: str
    when_label: Optional[str] = None
    when_action: Optional[str] = None
    when_index: Optional[int] = None
    when_terminal_query: Optional[bool] = None
    justification: str = ""


@dataclass(frozen=True)
class MockPolicy:
    """Scripted Critic/Judge behavior for the mock backend."""

    disputes: tuple[MockDispute, ...] = ()
    judge_prefers: str = "analyst"
    agree_justification: str = "the proposed label matches the behavioral evidence"

    def __post_init__(self) -> None:
        if self.judge_prefers not in ("analyst", "critic"):
            raise ValueError(f"judge_prefers must be analyst or critic, got {self.judge_prefers!r}")

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "MockPolicy":
        disputes = tuple(
            MockDispute(
                propose=d["propose"],
                when_label=d.get("when_label"),
                when_action=d.get("when_action"),
                when_index=d.get("when_index"),
                when_terminal_query=d.get("when_terminal_query"),
                justification=d.get("justification", ""),
            )
            for d in rec.get("disputes", ())
        )
        return cls(
            disputes=disputes,
            judge_prefers=rec.get("judge_prefers", "analyst"),
            agree_justification=rec.get(
                "agree_justification", cls.agree_justification),
        )

    @classmethod
    def from_json(cls, text: str) -> "MockPolicy":
        rec = json.loads(text)
        if not isinstance(rec, dict):
            raise MalformedInput("mock policy must be a JSON object")
        return cls.from_record(rec)


def _extract_block(prompt: str, header: str) -> str:
    pattern = re.compile(
        rf"^{re.escape(header)}\n```json\n(.*?)\n```", re.MULTILINE | re.DOTALL)
    match = pattern.search(prompt)
    if match is None:
        raise MalformedInput(f"prompt lacks a {header!r} block")
    return match.group(1)


class MockBackend:
    """Pure deterministic backend: output depends only on the prompt and policy."""

    def __init__(
        self,
        policy: Optional[MockPolicy] = None,
        labeler: Optional[LabelerConfig] = None,
        malformed_roles: FrozenSet[str] = frozenset(),
    ) -> None:
        self._policy = policy or MockPolicy()
        self._labeler = labeler or LabelerConfig()
        self._malformed_roles = frozenset(malformed_roles)

    def _session_from(self, prompt: str) -> Session:
        payload = json.loads(_extract_block(prompt, SESSION_HEADER))
        return Session.from_record({
            "id": payload["session_id"],
            "user_id": payload["user_id"],
            "events": [
                {
                    "session_id": payload["session_id"],
                    "index": a["index"],
                    "timestamp": a["timestamp"],
                    "action": a["action"],
                    "content": a["content"],
                    "content_id": a.get("content_id", ""),
                    "answer_present": a.get("answer_present", False),
                    "dwell_ms": a.get("dwell_ms"),
                }
                for a in payload["actions"]
            ],
        })

    def _dispute_for(self, s: Session, index: int,
                     analyst_label: str) -> Optional[MockDispute]:
        event = s.events[index]
        query_positions = [i for i, e in enumerate(s.events) if e.action.kind == "QUERY"]
        is_terminal_query = (
            bool(query_positions)
            and index == query_positions[-1]
            and not any(e.action.kind == "CLICK" for e in s.events[index + 1:]))
        for rule in self._policy.disputes:
            if rule.when_label is not None and rule.when_label != analyst_label:
                continue
            if rule.when_action is not None and rule.when_action != event.action.serialize():
                continue
            if rule.when_index is not None and rule.when_index != index:
                continue
            if (rule.when_terminal_query is not None
                    and rule.when_terminal_query != is_terminal_query):
                continue
            if rule.propose == analyst_label:
                continue
            return rule
        return None

    def _analyst_items(self, s: Session) -> list[dict[str, str]]:
        return [
            {"label": ann.label.serialize(), "justification": ann.justification}
            for ann in label_session(s, self._labeler)
        ]

    def _critic_items(self, s: Session,
                      analyst: Sequence[Mapping[str, str]]) -> list[dict[str, str]]:
        items: list[dict[str, str]] = []
        for i, proposal in enumerate(analyst):
            rule = self._dispute_for(s, i, proposal["label"])
            if rule is None:
                items.append({
                    "label": proposal["label"],
                    "justification": self._policy.agree_justification,
                })
            else:
                items.append({
                    "label": rule.propose,
                    "justification": rule.justification
                    or f"the evidence better supports {rule.propose}",
                })
        return items

    def _judge_items(self, analyst: Sequence[Mapping[str, str]],
                     critic: Sequence[Mapping[str, str]]) -> list[dict[str, str]]:
        items: list[dict[str, str]] = []
        for a, c in zip(analyst, critic):
            if a["label"] == c["label"]:
                items.append({
                    "label": a["label"],
                    "justification": f"both agents agree: {a['justification']}",
                })
            elif self._policy.judge_prefers == "critic":
                items.append({
                    "label": c["label"],
                    "justification": f"adopting the critique: {c['justification']}",
                })
            else:
                items.append({
                    "label": a["label"],
                    "justification": f"keeping the initial analysis: {a['justification']}",
                })
        return items

    def complete(self, role: "AgentRole", prompt: str) -> str:  # noqa: F821
        if role.value in self._malformed_roles:
            return "I could not produce the requested output."
        s = self._session_from(prompt)
        if role.value == "Analyst":
            items = self._analyst_items(s)
        elif role.value == "Critic":
            analyst = json.loads(_extract_block(prompt, ANALYST_HEADER))
            items = self._critic_items(s, analyst)
        else:
            analyst = json.loads(_extract_block(prompt, ANALYST_HEADER))
            critic = json.loads(_extract_block(prompt, CRITIC_HEADER))
            items = self._judge_items(analyst, critic)
        return f"```json\n{json.dumps(items, indent=2, sort_keys=True)}\n```"
