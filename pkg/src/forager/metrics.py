"""Agreement and classification metrics.

Everything here is exact: Krippendorff's alpha works in integer pair counts
scaled by 1/(m-1) per item, and ROC-AUC is the exact Mann-Whitney statistic
rather than a curve approximation. Degenerate cases raise UndefinedMetric
instead of returning a silent 0 or 1.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from forager.errors import MissingPrediction, UndefinedMetric
from forager.model import LABEL_INDEX, LABEL_ORDER, CognitiveAnnotation, CognitiveLabel


@dataclass(frozen=True)
class ReliabilityData:
    """Ratings per item; annotators may skip items."""

    items: tuple[tuple[str, Mapping[str, CognitiveLabel]], ...]

    @classmethod
    def from_items(
        cls, items: Sequence[tuple[str, Mapping[str, CognitiveLabel]]],
    ) -> "ReliabilityData":
        return cls(tuple((item_id, dict(ratings)) for item_id, ratings in items))


@dataclass(frozen=True)
class BinaryEval:
    """Scored predictions with boolean truths."""

    pairs: tuple[tuple[float, bool], ...]

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, bool]]) -> "BinaryEval":
        return cls(tuple((float(s), bool(t)) for s, t in pairs))


def krippendorff_alpha_nominal(data: ReliabilityData) -> float:
    """Krippendorff's alpha with the nominal distance metric.

    Builds the coincidence matrix from ordered value pairs within each item,
    weighted 1/(m-1) for an item with m ratings; alpha = 1 - D_o/D_e.
    """
    coincidence: dict[tuple[CognitiveLabel, CognitiveLabel], Fraction] = {}
    totals: dict[CognitiveLabel, Fraction] = {}
    for _, ratings in data.items:
        values = list(ratings.values())
        m = len(values)
        if m < 2:
            continue
        weight = Fraction(1, m - 1)
        for i, a in enumerate(values):
            for j, b in enumerate(values):
                if i == j:
                    continue
                coincidence[a, b] = coincidence.get((a, b), Fraction(0)) + weight
                totals[a] = totals.get(a, Fraction(0)) + weight
    n = sum(totals.values())
    if n == 0:
        raise UndefinedMetric("alpha requires at least one item with two ratings")
    if len(totals) < 2:
        raise UndefinedMetric("alpha is undefined when all ratings are identical")
    # nominal distance: disagreement iff values differ
    observed = sum(w for (a, b), w in coincidence.items() if a != b) / n
    expected = sum(
        totals[a] * totals[b]
        for a in totals for b in totals if a != b
    ) / (n * (n - 1))
    return float(1 - observed / expected)


def prf1(pairs: BinaryEval, threshold: float) -> dict[str, float]:
    """Precision, recall, and F1 with predictions = score >= threshold.

    Degenerate denominators yield 0.0 by convention.
    """
    if not pairs.pairs:
        raise UndefinedMetric("prf1 requires at least one pair")
    tp = fp = fn = 0
    for score, truth in pairs.pairs:
        predicted = score >= threshold
        if predicted and truth:
            tp += 1
        elif predicted:
            fp += 1
        elif truth:
            fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return {"precision": precision, "recall": recall, "f1": f1}


def roc_auc(pairs: BinaryEval) -> float:
    """Exact Mann-Whitney AUC: P(random positive outranks random negative), ties 0.5."""
    positives = sorted(s for s, t in pairs.pairs if t)
    negatives = sorted(s for s, t in pairs.pairs if not t)
    if not positives or not negatives:
        raise UndefinedMetric("roc_auc requires at least one positive and one negative")
    wins = ties = 0
    for score in positives:
        lo = bisect_left(negatives, score)
        hi = bisect_right(negatives, score)
        wins += lo
        ties += hi - lo
    return (2 * wins + ties) / (2 * len(positives) * len(negatives))


def accuracy_vs_gold(
    pred: Sequence[CognitiveAnnotation],
    gold: Sequence[tuple[str, int, CognitiveLabel]],
) -> dict[str, object]:
    """Exact-match accuracy over gold keys plus a 6x6 confusion matrix.

    Confusion rows follow LABEL_ORDER for the gold label, columns for the
    predicted label.
    """
    by_key = {(a.session_id, a.event_index): a.label for a in pred}
    if not gold:
        raise UndefinedMetric("accuracy requires at least one gold annotation")
    confusion = [[0] * len(LABEL_ORDER) for _ in LABEL_ORDER]
    correct = 0
    for session_id, event_index, gold_label in gold:
        key = (session_id, event_index)
        if key not in by_key:
            raise MissingPrediction(f"no prediction for {session_id}:{event_index}")
        predicted = by_key[key]
        confusion[LABEL_INDEX[gold_label]][LABEL_INDEX[predicted]] += 1
        if predicted == gold_label:
            correct += 1
    return {"accuracy": correct / len(gold), "confusion": confusion}
