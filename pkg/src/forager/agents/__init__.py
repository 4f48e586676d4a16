"""Analyst, Critic, and Judge annotation workflow over a completion backend."""

from forager.agents.backends import (
    CompletionBackend,
    HttpBackend,
    HttpBackendConfig,
    MockBackend,
    MockPolicy,
)
from forager.agents.pipeline import (
    AgentConfig,
    AgentRole,
    AgentTranscript,
    annotate_corpus,
    annotate_with_agents,
    disagreement_score,
    flag_top_fraction,
    heuristic_fallback_annotations,
    parse_agent_output,
)
from forager.agents.prompts import FewShot, build_prompt

__all__ = [
    "AgentConfig",
    "AgentRole",
    "AgentTranscript",
    "CompletionBackend",
    "FewShot",
    "HttpBackend",
    "HttpBackendConfig",
    "MockBackend",
    "MockPolicy",
    "annotate_corpus",
    "annotate_with_agents",
    "build_prompt",
    "disagreement_score",
    "flag_top_fraction",
    "heuristic_fallback_annotations",
    "parse_agent_output",
]
