"""End-to-end forecasting experiment: build, split, featurize, train, evaluate."""

from __future__ import annotations

import json
from typing import Sequence

from forager.errors import InsufficientData
from forager.metrics import BinaryEval, prf1, roc_auc
from forager.forecasting.features import FeatureConfig, featurize
from forager.forecasting.linear import train_logistic
from forager.forecasting.tasks import (
    AnnotatedSession,
    ForecastExample,
    TaskSpec,
    build_examples,
    split_by_user,
)

DECISION_THRESHOLD = 0.5
DEFAULT_TRAIN_RATIO = 0.8

METRIC_COLUMNS = ("precision", "recall", "f1", "auc")


def _require_both_classes(examples: Sequence[ForecastExample], side: str) -> None:
    outcomes = {e.outcome for e in examples}
    if outcomes != {True, False}:
        raise InsufficientData(f"{side} split lacks both outcome classes")


def run_experiment(
    corpus: Sequence[AnnotatedSession],
    spec: TaskSpec,
    cfgs: Sequence[FeatureConfig],
    seed: int,
    train_ratio: float = DEFAULT_TRAIN_RATIO,
) -> dict:
    """Evaluate each feature configuration on a shared user-based split.

    The split and training are fully seeded, so identical inputs produce a
    byte-identical report.
    """
    examples = build_examples(corpus, spec)
    if not examples:
        raise InsufficientData("no usable examples for this task")
    sessions = [s for s, _ in corpus]
    train, test = split_by_user(
        examples, sessions, ratio=train_ratio, seed=seed,
        balance_training=spec.balance_training)
    _require_both_classes(train, "train")
    _require_both_classes(test, "test")

    configs: list[dict] = []
    for cfg in cfgs:
        model = train_logistic(
            [(featurize(e, cfg), e.outcome) for e in train], seed=seed)
        scores = model.predict_proba(
            [featurize(e, cfg) for e in test])
        pairs = BinaryEval.from_pairs(
            [(float(s), e.outcome) for s, e in zip(scores, test)])
        entry = {"name": cfg.name, "auc": roc_auc(pairs)}
        entry.update(prf1(pairs, DECISION_THRESHOLD))
        configs.append(entry)

    deltas: dict[str, dict[str, float]] = {}
    for i, earlier in enumerate(configs):
        for later in configs[i + 1:]:
            deltas[f"{later['name']}-{earlier['name']}"] = {
                m: later[m] - earlier[m] for m in METRIC_COLUMNS}
    return {
        "task": spec.task,
        "train_size": len(train),
        "test_size": len(test),
        "configs": [
            {"name": c["name"], **{m: c[m] for m in METRIC_COLUMNS}}
            for c in configs
        ],
        "deltas": deltas,
    }


def render_report_table(report: dict) -> str:
    """Aligned text table: one row per config, Precision/Recall/F1/AUC columns."""
    headers = ("Config", "Precision", "Recall", "F1", "AUC")
    rows = [
        (c["name"],) + tuple(f"{c[m]:.3f}" for m in METRIC_COLUMNS)
        for c in report["configs"]
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    def fmt(row: tuple) -> str:
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
    lines = [fmt(headers), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines)


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
