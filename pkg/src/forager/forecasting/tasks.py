"""Forecast task construction: prefix examples and user-based splits.

An example is a session prefix plus a boolean outcome; the prefix never
includes the final event, so the label that decides the outcome is never a
feature input. Prefix labels are taken from the stored annotations, whose
provider must have inferred them from prefix-local context only; the
synthetic generator satisfies this causally, and review-time human labels
are per-event by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from forager.errors import UnannotatedEvent
from forager.model import (
    CognitiveAnnotation,
    CognitiveLabel,
    Event,
    Session,
    effective_annotation,
)

SUCCESS_LABELS = frozenset((
    CognitiveLabel.APPROACHING_SOURCE,
    CognitiveLabel.FORAGING_SUCCESS,
    CognitiveLabel.DIET_ENRICHMENT,
))
FAILURE_LABELS = frozenset((
    CognitiveLabel.POOR_SCENT,
    CognitiveLabel.LEAVING_PATCH,
))
STRUGGLE_LABELS = FAILURE_LABELS

#: A session plus its per-event annotations, the corpus currency everywhere.
AnnotatedSession = tuple[Session, Sequence[CognitiveAnnotation]]

OUTCOME_RULES = ("final_label", "post_prefix_any_success")


@dataclass(frozen=True)
class TaskSpec:
    """Which forecasting task to build and how to cut prefixes."""

    task: str = "outcome"
    prefix_fraction: Optional[float] = None
    min_events: int = 4
    success_labels: frozenset = SUCCESS_LABELS
    failure_labels: frozenset = FAILURE_LABELS
    balance_training: bool = True
    outcome_rule: str = "final_label"

    def __post_init__(self) -> None:
        if self.task not in ("outcome", "recovery"):
            raise ValueError(f"unknown task: {self.task!r}")
        if self.prefix_fraction is None:
            object.__setattr__(
                self, "prefix_fraction", 0.5 if self.task == "outcome" else 0.4)
        if not 0.0 < self.prefix_fraction < 1.0:
            raise ValueError(
                f"prefix_fraction must be in (0, 1), got {self.prefix_fraction}")
        if self.min_events < 1:
            raise ValueError("min_events must be positive")
        object.__setattr__(self, "success_labels", frozenset(self.success_labels))
        object.__setattr__(self, "failure_labels", frozenset(self.failure_labels))
        if self.success_labels & self.failure_labels:
            raise ValueError("success and failure label sets must be disjoint")
        if self.outcome_rule not in OUTCOME_RULES:
            raise ValueError(f"unknown outcome_rule: {self.outcome_rule!r}")

    def prefix_length(self, n: int) -> int:
        return max(1, math.floor(self.prefix_fraction * n))


@dataclass(frozen=True)
class ForecastExample:
    session_id: str
    prefix_events: tuple[tuple[Event, CognitiveLabel], ...]
    outcome: bool


def effective_labels(session: Session,
                     annotations: Sequence[CognitiveAnnotation]) -> list[CognitiveLabel]:
    """Per-event winning label under source precedence; every event must have one."""
    groups: dict[int, list[CognitiveAnnotation]] = {}
    for ann in annotations:
        if ann.session_id == session.id:
            groups.setdefault(ann.event_index, []).append(ann)
    labels: list[CognitiveLabel] = []
    for event in session.events:
        winner = effective_annotation(groups.get(event.index, ()))
        if winner is None:
            raise UnannotatedEvent(
                f"event {session.id}:{event.index} has no annotation")
        labels.append(winner.label)
    return labels


def _outcome_for(spec: TaskSpec, labels: Sequence[CognitiveLabel],
                 prefix: int) -> Optional[bool]:
    if spec.task == "recovery" or spec.outcome_rule == "post_prefix_any_success":
        return any(lab in spec.success_labels for lab in labels[prefix:])
    final = labels[-1]
    if final in spec.success_labels:
        return True
    if final in spec.failure_labels:
        return False
    return None


def build_examples(corpus: Sequence[AnnotatedSession],
                   spec: TaskSpec) -> list[ForecastExample]:
    """Turn annotated sessions into prefix/outcome examples per the task rules."""
    examples: list[ForecastExample] = []
    for session, annotations in corpus:
        n = len(session.events)
        if n < spec.min_events:
            continue
        labels = effective_labels(session, annotations)
        prefix = spec.prefix_length(n)
        if prefix >= n:
            continue
        if spec.task == "recovery" and not any(
                lab in STRUGGLE_LABELS for lab in labels[:prefix]):
            continue
        outcome = _outcome_for(spec, labels, prefix)
        if outcome is None:
            continue
        examples.append(ForecastExample(
            session_id=session.id,
            prefix_events=tuple(zip(session.events[:prefix], labels[:prefix])),
            outcome=outcome,
        ))
    return examples


def split_by_user(
    examples: Sequence[ForecastExample],
    sessions: Sequence[Session],
    ratio: float,
    seed: int,
    balance_training: bool = True,
) -> tuple[list[ForecastExample], list[ForecastExample]]:
    """Split examples so no user appears on both sides; optionally balance train.

    Users are shuffled by a seeded generator; the first floor(ratio * n_users)
    take their examples to train. Balancing down-samples the majority class
    in train (seeded) to match the minority exactly.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    user_of = {s.id: s.user_id for s in sessions}
    users = sorted({user_of[e.session_id] for e in examples})
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(len(users)))
    n_train = int(len(users) * ratio)
    if len(users) >= 2:
        n_train = min(max(n_train, 1), len(users) - 1)
    train_users = {users[i] for i in order[:n_train]}

    train = [e for e in examples if user_of[e.session_id] in train_users]
    test = [e for e in examples if user_of[e.session_id] not in train_users]
    if balance_training:
        train = _balance(train, rng)
    return train, test


def _balance(examples: list[ForecastExample],
             rng: np.random.Generator) -> list[ForecastExample]:
    positives = [i for i, e in enumerate(examples) if e.outcome]
    negatives = [i for i, e in enumerate(examples) if not e.outcome]
    if not positives or not negatives:
        return examples
    keep = min(len(positives), len(negatives))
    kept: set[int] = set()
    for pool in (positives, negatives):
        chosen = rng.choice(len(pool), size=keep, replace=False)
        kept.update(pool[int(i)] for i in chosen)
    return [e for i, e in enumerate(examples) if i in kept]
