"""Cognitive labeling of search sessions with foraging-state labels.

The package turns raw interaction logs into labeled, reviewable sessions:
ingest normalizes logs, the heuristic and agent labelers attach cognitive
labels, metrics quantify agreement and classification quality, forecasting
predicts session outcomes from prefixes, and the store plus HTTP service
persist everything for review.
"""

from forager.model import (
    LABEL_ORDER,
    ActionType,
    CognitiveAnnotation,
    CognitiveLabel,
    Event,
    Session,
    Violation,
    effective_annotation,
    validate_session,
)

__version__ = "0.1.0"

__all__ = [
    "ActionType",
    "CognitiveAnnotation",
    "CognitiveLabel",
    "Event",
    "LABEL_ORDER",
    "Session",
    "Violation",
    "effective_annotation",
    "validate_session",
    "__version__",
]
