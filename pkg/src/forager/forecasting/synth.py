"""Outcome-conditioned synthetic session generator.

Label trajectories come from outcome-conditioned first-order transition
matrices, so the cognitive stream predicts the outcome by construction.
Query and click text is drawn from one shared vocabulary by a process that
never looks at the outcome or the labels, so the text channel carries no
outcome signal; this separation is what the feature-family comparison
measures. Labels are generated causally (each step depends only on the
chain so far), except that the final step is restricted to outcome-consistent
terminal labels; the final event is never part of a forecast prefix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from forager.model import ActionType, CognitiveAnnotation, CognitiveLabel, Event, Session
from forager.forecasting.tasks import AnnotatedSession

_FS = CognitiveLabel.FOLLOWING_SCENT
_AS = CognitiveLabel.APPROACHING_SOURCE
_DE = CognitiveLabel.DIET_ENRICHMENT
_PS = CognitiveLabel.POOR_SCENT
_LP = CognitiveLabel.LEAVING_PATCH
_FG = CognitiveLabel.FORAGING_SUCCESS

Row = Sequence[tuple[CognitiveLabel, float]]

# Success chains favor clicks and refinement; clicks never follow a
# zero-click state (PoorScent/ForagingSuccess have no clicked result).
_SUCCESS_START: Row = ((_FS, 1.0),)
_SUCCESS_CHAIN: dict[CognitiveLabel, Row] = {
    _FS: ((_AS, 0.75), (_DE, 0.15), (_PS, 0.10)),
    _AS: ((_DE, 0.35), (_FS, 0.25), (_AS, 0.25), (_FG, 0.15)),
    _DE: ((_AS, 0.70), (_DE, 0.15), (_FG, 0.15)),
    _PS: ((_DE, 0.50), (_FS, 0.30), (_PS, 0.20)),
    _FG: ((_FS, 0.50), (_DE, 0.50)),
}
_SUCCESS_TERMINAL = frozenset((_AS, _DE, _FG))

# Failure chains drift into zero-click queries and end in the patch-leaving
# states; they still contain occasional short, unsatisfying clicks.
_FAILURE_START: Row = ((_PS, 0.70), (_FS, 0.30))
_FAILURE_CHAIN: dict[CognitiveLabel, Row] = {
    _FS: ((_PS, 0.55), (_AS, 0.35), (_DE, 0.10)),
    _AS: ((_PS, 0.60), (_FS, 0.25), (_DE, 0.15)),
    _DE: ((_PS, 0.65), (_AS, 0.25), (_DE, 0.10)),
    _PS: ((_PS, 0.60), (_DE, 0.25), (_FS, 0.15)),
}
_FAILURE_TERMINAL: Row = ((_LP, 0.70), (_PS, 0.30))

_QUERY_LABELS = frozenset((_FS, _DE, _PS, _LP, _FG))

VOCABULARY: tuple[str, ...] = (
    "garden", "kitchen", "laptop", "travel", "recipe", "weather", "market",
    "tickets", "museum", "library", "battery", "camera", "hiking", "coffee",
    "guitar", "piano", "budget", "insurance", "flights", "hotel", "resume",
    "printer", "monitor", "keyboard", "phone", "tablet", "charger", "backpack",
    "tent", "fishing", "cycling", "running", "yoga", "nutrition", "vitamins",
    "allergy", "doctor", "dentist", "plumber", "electrician", "paint",
    "flooring", "curtains", "sofa", "mattress", "blender", "toaster",
    "freezer", "garage", "sedan", "tires", "engine", "transmission", "salary",
    "taxes", "mortgage", "rent", "lease", "contract", "passport", "visa",
    "festival", "concert", "theater",
)

_BASE_TIMESTAMP = 1672531200000  # 2023-01-01T00:00:00Z


@dataclass(frozen=True)
class SynthParams:
    p_success: float = 0.5
    min_len: int = 4
    max_len: int = 12
    refine_prob: float = 0.4
    sessions_per_user: int = 2
    short_dwell_ms: tuple[int, int] = (2000, 9000)
    long_dwell_ms: tuple[int, int] = (35000, 120000)

    def __post_init__(self) -> None:
        if not 0.0 < self.p_success < 1.0:
            raise ValueError("p_success must be in (0, 1)")
        if not 2 <= self.min_len <= self.max_len:
            raise ValueError("need 2 <= min_len <= max_len")
        if not 0.0 <= self.refine_prob <= 1.0:
            raise ValueError("refine_prob must be in [0, 1]")
        if self.sessions_per_user < 1:
            raise ValueError("sessions_per_user must be positive")


def _draw(rng: np.random.Generator, row: Row) -> CognitiveLabel:
    labels = [lab for lab, _ in row]
    probs = np.array([p for _, p in row])
    return labels[int(rng.choice(len(labels), p=probs / probs.sum()))]


def _terminal_draw(rng: np.random.Generator, success: bool,
                   current: CognitiveLabel) -> CognitiveLabel:
    if not success:
        return _draw(rng, _FAILURE_TERMINAL)
    row = [(lab, p) for lab, p in _SUCCESS_CHAIN[current] if lab in _SUCCESS_TERMINAL]
    return _draw(rng, row)


def _label_chain(rng: np.random.Generator, success: bool, n: int) -> list[CognitiveLabel]:
    chain = [_draw(rng, _SUCCESS_START if success else _FAILURE_START)]
    matrix = _SUCCESS_CHAIN if success else _FAILURE_CHAIN
    while len(chain) < n - 1:
        chain.append(_draw(rng, matrix[chain[-1]]))
    chain.append(_terminal_draw(rng, success, chain[-1]))
    return chain


def _fresh_text(rng: np.random.Generator) -> str:
    k = int(rng.integers(2, 5))
    words = rng.choice(len(VOCABULARY), size=k, replace=False)
    return " ".join(VOCABULARY[int(w)] for w in words)


def _next_query(rng: np.random.Generator, prev: Optional[str],
                refine_prob: float) -> str:
    # refinement is outcome- and label-independent by design
    if prev is not None and len(prev.split()) < 8 and rng.random() < refine_prob:
        return f"{prev} {VOCABULARY[int(rng.integers(len(VOCABULARY)))]}"
    return _fresh_text(rng)


def generate_synthetic(
    n_sessions: int,
    seed: int,
    params: Optional[SynthParams] = None,
) -> list[AnnotatedSession]:
    """Generate annotated sessions whose labels, not text, predict the outcome."""
    if n_sessions < 2:
        raise ValueError("n_sessions must be at least 2")
    params = params or SynthParams()
    rng = np.random.default_rng(seed)
    corpus: list[AnnotatedSession] = []
    for i in range(n_sessions):
        success = bool(rng.random() < params.p_success)
        n = int(rng.integers(params.min_len, params.max_len + 1))
        labels = _label_chain(rng, success, n)
        session_id = f"synth-{i:05d}"
        user_id = f"user-{i // params.sessions_per_user:05d}"

        events: list[Event] = []
        annotations: list[CognitiveAnnotation] = []
        ts = _BASE_TIMESTAMP + i * 3600000
        prev_query: Optional[str] = None
        doc_counter = 0
        for idx, label in enumerate(labels):
            if label in _QUERY_LABELS:
                prev_query = _next_query(rng, prev_query, params.refine_prob)
                events.append(Event(
                    session_id=session_id,
                    index=idx,
                    timestamp=ts,
                    action=ActionType.QUERY,
                    content=prev_query,
                    answer_present=label is _FG,
                ))
                ts += int(rng.integers(2000, 20001))
            else:
                lo, hi = params.long_dwell_ms if success else params.short_dwell_ms
                dwell = int(rng.integers(lo, hi + 1))
                doc_counter += 1
                events.append(Event(
                    session_id=session_id,
                    index=idx,
                    timestamp=ts,
                    action=ActionType.CLICK,
                    content=_fresh_text(rng),
                    content_id=f"{session_id}-d{doc_counter}",
                    dwell_ms=dwell,
                ))
                ts += dwell + int(rng.integers(1000, 5001))
            annotations.append(CognitiveAnnotation(
                session_id=session_id,
                event_index=idx,
                label=label,
                justification="synthetic-trajectory",
                source="heuristic",
                confidence=1.0,
            ))
        corpus.append((Session(id=session_id, user_id=user_id, events=tuple(events)),
                       tuple(annotations)))
    return corpus
