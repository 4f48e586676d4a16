"""Exception types shared across the package."""

from __future__ import annotations


class ForagerError(Exception):
    """Base class for all package errors."""


class MalformedInput(ForagerError):
    """The input file is unusable: undecodable, missing mapped columns, or not the stated format."""


class EmptyQuery(ForagerError):
    """A query string was empty after whitespace trimming."""


class EmptySession(ForagerError):
    """A session with no events was passed where at least one event is required."""


class ParseFailure(ForagerError):
    """Agent output could not be parsed into the expected label list."""


class BackendUnavailable(ForagerError):
    """The completion backend kept failing after bounded retries."""


class PartialFailure(ForagerError):
    """An annotation run stopped early; carries whatever completed before the failure.

    ``escalated`` lists (session_id, event_index) keys that need human review
    because no parseable agent verdict could be obtained for them.
    """

    def __init__(self, message, annotations=(), transcripts=(), escalated=()):
        super().__init__(message)
        self.annotations = list(annotations)
        self.transcripts = list(transcripts)
        self.escalated = list(escalated)


class UndefinedMetric(ForagerError):
    """The requested metric has no defined value on this input (e.g. zero expected disagreement)."""


class MissingPrediction(ForagerError):
    """A gold-standard key has no corresponding prediction."""


class UnannotatedEvent(ForagerError):
    """An event required by task construction carries no annotation from any source."""


class InsufficientData(ForagerError):
    """A train or test split does not contain both outcome classes."""


class DimensionMismatch(ForagerError):
    """Feature vectors passed to the trainer do not share one dimension."""


class UnknownDataset(ForagerError):
    """The workspace has no dataset registered under the given id."""


class UnlabeledEvents(ForagerError):
    """Export refused: some events carry no effective label (pass force to export anyway)."""


class StoreCorrupt(ForagerError):
    """A record file is damaged beyond the recoverable torn-final-line case."""


class DatasetBusy(ForagerError):
    """Another writer (labeling job or decision) currently owns this dataset."""
