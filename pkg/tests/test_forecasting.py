"""Forecasting stack: task building, features, trainer, synthesis, experiments."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from forager.errors import DimensionMismatch, InsufficientData, UnannotatedEvent
from forager.forecasting import (
    FeatureConfig,
    ForecastExample,
    SynthParams,
    TaskSpec,
    build_examples,
    featurize,
    generate_synthetic,
    loss_and_grad,
    render_report_table,
    report_to_json,
    run_experiment,
    split_by_user,
    train_logistic,
)
from forager.forecasting.features import LABEL_FAMILY_DIMS
from forager.forecasting.linear import DEFAULT_EPOCHS
from forager.forecasting.tasks import FAILURE_LABELS, SUCCESS_LABELS, effective_labels
from forager.model import CognitiveLabel, validate_session

from helpers import AS, DE, FG, FS, LP, PS, ann, c, labels_of, q, sess

TEXT_ONLY = FeatureConfig(use_text=True, use_labels=False)
LABELS_ONLY = FeatureConfig(use_text=False, use_labels=True)
BOTH = FeatureConfig(use_text=True, use_labels=True)


def annotated(sid, labels, user=""):
    """Session whose event shapes follow the labels, plus matching annotations."""
    events = []
    for i, lab in enumerate(labels):
        ts = 1000 + i * 10000
        if lab is AS:
            events.append(c(sid, i, ts, dwell=40000, cid=f"{sid}-d{i}"))
        else:
            events.append(q(sid, i, ts, f"term{i} filler", answer=lab is FG))
    session = sess(sid, *events, user=user or f"user-{sid}")
    return session, [ann(sid, i, lab) for i, lab in enumerate(labels)]


class TestTaskSpec:
    def test_defaults(self):
        outcome = TaskSpec()
        assert outcome.task == "outcome"
        assert outcome.prefix_fraction == 0.5
        assert outcome.min_events == 4
        assert outcome.balance_training is True
        assert outcome.outcome_rule == "final_label"
        assert TaskSpec(task="recovery").prefix_fraction == 0.4

    def test_label_set_defaults(self):
        spec = TaskSpec()
        assert spec.success_labels == SUCCESS_LABELS == {AS, FG, DE}
        assert spec.failure_labels == FAILURE_LABELS == {PS, LP}

    @pytest.mark.parametrize("kwargs", [
        {"task": "churn"},
        {"prefix_fraction": 0.0},
        {"prefix_fraction": 1.0},
        {"min_events": 0},
        {"success_labels": frozenset({AS, PS})},
        {"outcome_rule": "majority"},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            TaskSpec(**kwargs)

    def test_prefix_length_floors_with_a_minimum_of_one(self):
        spec = TaskSpec(prefix_fraction=0.5)
        assert spec.prefix_length(6) == 3
        assert spec.prefix_length(5) == 2
        assert spec.prefix_length(1) == 1
        assert TaskSpec(task="recovery").prefix_length(4) == 1


class TestBuildExamples:
    def test_outcome_example_from_a_failed_session(self):
        corpus = [annotated("s1", [FS, AS, PS, PS, PS, LP])]
        examples = build_examples(corpus, TaskSpec())
        assert len(examples) == 1
        example = examples[0]
        assert example.session_id == "s1"
        assert example.outcome is False
        assert [lab for _, lab in example.prefix_events] == [FS, AS, PS]

    def test_short_sessions_are_excluded(self):
        corpus = [annotated("s1", [FS, AS, FG])]
        assert build_examples(corpus, TaskSpec()) == []

    def test_neutral_terminal_label_drops_the_session(self):
        corpus = [annotated("s1", [PS, PS, PS, FS])]
        assert build_examples(corpus, TaskSpec()) == []

    def test_post_prefix_any_success_rule(self):
        corpus = [annotated("s1", [FS, PS, PS, AS, FS, LP])]
        by_final = build_examples(corpus, TaskSpec())
        by_any = build_examples(
            corpus, TaskSpec(outcome_rule="post_prefix_any_success"))
        assert by_final[0].outcome is False
        assert by_any[0].outcome is True

    def test_recovery_requires_struggle_in_the_prefix(self):
        struggled = annotated("s1", [PS, PS, AS, DE, FG])
        smooth = annotated("s2", [FS, AS, DE, AS, FG])
        stuck = annotated("s3", [PS, PS, PS, PS, LP])
        examples = build_examples(
            [struggled, smooth, stuck], TaskSpec(task="recovery"))
        assert [(e.session_id, e.outcome) for e in examples] == [
            ("s1", True), ("s3", False)]

    def test_unannotated_event_is_an_error(self):
        session, annotations = annotated("s1", [FS, AS, PS, PS, PS, LP])
        with pytest.raises(UnannotatedEvent):
            build_examples([(session, annotations[:-1])], TaskSpec())

    @pytest.mark.parametrize("n", range(4, 13))
    @pytest.mark.parametrize("fraction", [0.25, 0.5, 0.75])
    def test_prefix_never_reaches_the_final_event(self, n, fraction):
        spec = TaskSpec(prefix_fraction=fraction)
        corpus = [annotated("s1", [PS] * (n - 1) + [LP])]
        (example,) = build_examples(corpus, spec)
        assert len(example.prefix_events) == spec.prefix_length(n)
        assert len(example.prefix_events) == max(1, math.floor(fraction * n))
        assert len(example.prefix_events) < n


class TestEffectiveLabels:
    def test_human_overrides_heuristic(self):
        session, annotations = annotated("s1", [PS, PS, PS, LP])
        override = ann("s1", 3, FG, source="human",
                       justification="the last query hit a snippet")
        labels = effective_labels(session, annotations + [override])
        assert labels == [PS, PS, PS, FG]

    def test_foreign_session_annotations_are_ignored(self):
        session, annotations = annotated("s1", [PS, PS, PS, LP])
        noise = ann("other", 0, FG)
        assert effective_labels(session, annotations + [noise]) == [PS, PS, PS, LP]


class TestSplitByUser:
    def _corpus_examples(self, n=60, seed=4):
        corpus = generate_synthetic(n, seed)
        examples = build_examples(corpus, TaskSpec())
        sessions = [s for s, _ in corpus]
        return examples, sessions

    def test_no_user_straddles_the_split(self):
        examples, sessions = self._corpus_examples()
        user_of = {s.id: s.user_id for s in sessions}
        for seed in range(20):
            train, test = split_by_user(examples, sessions, 0.8, seed)
            train_users = {user_of[e.session_id] for e in train}
            test_users = {user_of[e.session_id] for e in test}
            assert not train_users & test_users
            assert train and test

    def test_train_user_count_is_floor_of_ratio(self):
        examples, sessions = self._corpus_examples()
        user_of = {s.id: s.user_id for s in sessions}
        n_users = len({user_of[e.session_id] for e in examples})
        train, _ = split_by_user(examples, sessions, 0.8, seed=1,
                                 balance_training=False)
        assert len({user_of[e.session_id] for e in train}) == int(n_users * 0.8)

    def test_extreme_ratios_keep_both_sides_nonempty(self):
        examples, sessions = self._corpus_examples(n=8)
        for ratio in (0.001, 0.999):
            train, test = split_by_user(examples, sessions, ratio, seed=0,
                                        balance_training=False)
            assert train and test

    def test_balancing_downsamples_to_the_minority_exactly(self):
        examples, sessions = self._corpus_examples()
        raw_train, _ = split_by_user(examples, sessions, 0.8, seed=2,
                                     balance_training=False)
        floor = min(sum(e.outcome for e in raw_train),
                    sum(not e.outcome for e in raw_train))
        train, _ = split_by_user(examples, sessions, 0.8, seed=2)
        assert sum(e.outcome for e in train) == floor
        assert sum(not e.outcome for e in train) == floor
        assert set(map(id, train)) <= set(map(id, raw_train))

    def test_same_seed_is_deterministic(self):
        examples, sessions = self._corpus_examples()
        assert split_by_user(examples, sessions, 0.8, 7) == split_by_user(
            examples, sessions, 0.8, 7)

    @pytest.mark.parametrize("ratio", [0.0, 1.0, -0.3])
    def test_ratio_bounds(self, ratio):
        examples, sessions = self._corpus_examples(n=4)
        with pytest.raises(ValueError):
            split_by_user(examples, sessions, ratio, 0)


def _example(labels, texts=None):
    texts = texts or [f"term{i} filler" for i in range(len(labels))]
    events = []
    for i, (lab, text) in enumerate(zip(labels, texts)):
        if lab is AS:
            events.append(c("x", i, 1000 + i * 10000, content=text, dwell=40000))
        else:
            events.append(q("x", i, 1000 + i * 10000, text))
    return ForecastExample(session_id="x",
                           prefix_events=tuple(zip(events, labels)),
                           outcome=True)


class TestFeaturize:
    def test_dimensions(self):
        assert LABEL_FAMILY_DIMS == 49
        assert TEXT_ONLY.dimension == 256
        assert LABELS_ONLY.dimension == 49
        assert BOTH.dimension == 305
        example = _example([FS, AS])
        for cfg in (TEXT_ONLY, LABELS_ONLY, BOTH):
            assert featurize(example, cfg).shape == (cfg.dimension,)

    def test_config_names(self):
        assert TEXT_ONLY.name == "text"
        assert LABELS_ONLY.name == "labels"
        assert BOTH.name == "both"

    def test_text_vector_is_unit_norm(self):
        vec = featurize(_example([FS, PS]), TEXT_ONLY)
        assert math.isclose(float(np.linalg.norm(vec)), 1.0, abs_tol=1e-12)

    def test_label_vector_layout(self):
        vec = featurize(_example([FS, AS]), LABELS_ONLY)
        assert vec[0] == 0.5          # FollowingScent unigram
        assert vec[1] == 0.5          # ApproachingSource unigram
        assert vec[6 + 1] == 1.0      # FS -> AS bigram
        assert vec[42 + 1] == 1.0     # last label one-hot
        assert vec[48] == 2 / 32      # prefix length
        assert np.count_nonzero(vec) == 5

    def test_repeated_label_bigram(self):
        vec = featurize(_example([PS, PS]), LABELS_ONLY)
        assert vec[3] == 1.0
        assert vec[6 + 3 * 6 + 3] == 1.0
        assert vec[42 + 3] == 1.0
        assert vec[48] == 2 / 32

    def test_text_family_ignores_labels(self):
        texts = ["garden tickets", "museum library"]
        a = _example([FS, PS], texts)
        b = _example([PS, FS], texts)
        assert np.array_equal(featurize(a, TEXT_ONLY), featurize(b, TEXT_ONLY))

    def test_label_family_ignores_text(self):
        a = _example([FS, PS], ["garden tickets", "museum library"])
        b = _example([FS, PS], ["sofa mattress", "budget flights"])
        assert np.array_equal(featurize(a, LABELS_ONLY), featurize(b, LABELS_ONLY))

    def test_deterministic(self):
        example = _example([FS, AS, DE, AS])
        assert np.array_equal(featurize(example, BOTH), featurize(example, BOTH))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FeatureConfig(use_text=False, use_labels=False)
        with pytest.raises(ValueError):
            FeatureConfig(text_hash_dims=0)


class TestLossAndGrad:
    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(8, 3))
        y = rng.choice([-1.0, 1.0], size=8)
        l2 = 0.01
        h = 1e-6
        for _ in range(5):
            w = rng.normal(size=3)
            b = float(rng.normal())
            loss, grad_w, grad_b = loss_and_grad(w, b, X, y, l2)
            for k in range(3):
                step = np.zeros(3)
                step[k] = h
                hi, _, _ = loss_and_grad(w + step, b, X, y, l2)
                lo, _, _ = loss_and_grad(w - step, b, X, y, l2)
                numeric = (hi - lo) / (2 * h)
                assert abs(numeric - grad_w[k]) <= 1e-4 * max(1.0, abs(numeric))
            hi, _, _ = loss_and_grad(w, b + h, X, y, l2)
            lo, _, _ = loss_and_grad(w, b - h, X, y, l2)
            numeric = (hi - lo) / (2 * h)
            assert abs(numeric - grad_b) <= 1e-4 * max(1.0, abs(numeric))


def _separable(n=40, seed=0):
    rng = np.random.default_rng(seed)
    data = []
    for i in range(n):
        truth = i % 2 == 0
        center = 2.0 if truth else -2.0
        data.append((np.array([center + rng.normal(scale=0.2), rng.normal()]),
                     truth))
    return data


class TestTrainLogistic:
    def test_trace_length_includes_the_initial_loss(self):
        model = train_logistic(_separable(), epochs=10)
        assert len(model.loss_trace) == 11
        assert len(train_logistic(_separable()).loss_trace) == DEFAULT_EPOCHS + 1

    def test_small_learning_rate_descends_monotonically(self):
        model = train_logistic(_separable(), epochs=50, lr=0.05)
        trace = model.loss_trace
        assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
        assert trace[-1] < trace[0]

    def test_separable_problem_is_learned(self):
        data = _separable()
        model = train_logistic(data)
        decisions = model.decision(np.stack([v for v, _ in data]))
        assert all((d > 0) == t for d, (_, t) in zip(decisions, data))
        proba = model.predict_proba(np.array([2.0, 0.0]))
        assert proba.shape == (1,)
        assert proba[0] > 0.9

    def test_dimension_mismatches(self):
        with pytest.raises(DimensionMismatch):
            train_logistic([])
        with pytest.raises(DimensionMismatch):
            train_logistic([(np.zeros(3), True), (np.zeros(4), False)])
        model = train_logistic(_separable())
        with pytest.raises(DimensionMismatch):
            model.decision(np.zeros((1, 5)))

    def test_uninformative_labels_score_near_chance(self):
        from forager.metrics import BinaryEval, roc_auc

        rng = np.random.default_rng(0)
        X = rng.normal(size=(500, 16))
        y = rng.random(500) < 0.5
        model = train_logistic([(X[i], bool(y[i])) for i in range(400)], seed=0)
        scores = model.predict_proba(X[400:])
        auc = roc_auc(BinaryEval.from_pairs(
            [(float(s), bool(t)) for s, t in zip(scores, y[400:])]))
        assert 0.4 <= auc <= 0.6


class TestGenerateSynthetic:
    def test_deterministic(self):
        assert generate_synthetic(50, 9) == generate_synthetic(50, 9)

    def test_identifier_scheme(self):
        corpus = generate_synthetic(6, 1)
        assert [s.id for s, _ in corpus] == [f"synth-{i:05d}" for i in range(6)]
        assert [s.user_id for s, _ in corpus] == [
            "user-00000", "user-00000", "user-00001", "user-00001",
            "user-00002", "user-00002"]

    def test_sessions_validate_and_annotations_align(self):
        for session, annotations in generate_synthetic(40, 2):
            assert validate_session(session) == []
            assert [a.event_index for a in annotations] == [
                e.index for e in session.events]
            assert all(a.session_id == session.id for a in annotations)

    def test_outcome_classes_are_roughly_balanced(self):
        corpus = generate_synthetic(1000, 3)
        successes = sum(
            annotations[-1].label in SUCCESS_LABELS for _, annotations in corpus)
        assert 0.45 <= successes / len(corpus) <= 0.55

    def test_terminal_and_structural_invariants(self):
        for session, annotations in generate_synthetic(120, 4):
            labels = labels_of(annotations)
            terminal = labels[-1]
            assert terminal in SUCCESS_LABELS or terminal in {PS, LP}
            assert LP not in labels[:-1]
            success = terminal in SUCCESS_LABELS
            for event, annotation in zip(session.events, annotations):
                if event.action.kind == "QUERY":
                    assert event.answer_present == (annotation.label is FG)
                else:
                    assert annotation.label is AS
                    assert event.content_id
                    lo, hi = (35000, 120000) if success else (2000, 9000)
                    assert lo <= event.dwell_ms <= hi

    def test_too_few_sessions_rejected(self):
        with pytest.raises(ValueError):
            generate_synthetic(1, 0)

    @pytest.mark.parametrize("kwargs", [
        {"p_success": 0.0}, {"p_success": 1.0},
        {"min_len": 1}, {"min_len": 9, "max_len": 8},
        {"refine_prob": 1.5}, {"sessions_per_user": 0},
    ])
    def test_params_validation(self, kwargs):
        with pytest.raises(ValueError):
            SynthParams(**kwargs)


@pytest.fixture(scope="module")
def report():
    corpus = generate_synthetic(200, 5)
    return run_experiment(corpus, TaskSpec(),
                          [TEXT_ONLY, LABELS_ONLY, BOTH], seed=5)


class TestRunExperiment:
    def test_report_shape(self, report):
        assert set(report) == {"task", "train_size", "test_size",
                               "configs", "deltas"}
        assert report["task"] == "outcome"
        assert [c["name"] for c in report["configs"]] == ["text", "labels", "both"]
        for config in report["configs"]:
            assert set(config) == {"name", "precision", "recall", "f1", "auc"}
        assert set(report["deltas"]) == {"labels-text", "both-text",
                                         "both-labels"}

    def test_deltas_are_pairwise_differences(self, report):
        by_name = {c["name"]: c for c in report["configs"]}
        for key, delta in report["deltas"].items():
            later, earlier = key.split("-")
            for metric in ("precision", "recall", "f1", "auc"):
                assert delta[metric] == by_name[later][metric] - by_name[earlier][metric]

    def test_label_features_beat_text_features(self, report):
        by_name = {c["name"]: c for c in report["configs"]}
        assert by_name["labels"]["auc"] > 0.8
        assert by_name["labels"]["auc"] > by_name["text"]["auc"]
        assert by_name["labels"]["f1"] > by_name["text"]["f1"]

    def test_rerun_is_byte_identical(self, report):
        corpus = generate_synthetic(200, 5)
        again = run_experiment(corpus, TaskSpec(),
                               [TEXT_ONLY, LABELS_ONLY, BOTH], seed=5)
        assert report_to_json(again) == report_to_json(report)

    def test_single_class_corpus_is_insufficient(self):
        corpus = [annotated(f"s{i}", [FS, AS, DE, FG], user=f"u{i}")
                  for i in range(10)]
        with pytest.raises(InsufficientData):
            run_experiment(corpus, TaskSpec(), [LABELS_ONLY], seed=0)

    def test_empty_example_set_is_insufficient(self):
        corpus = [annotated(f"s{i}", [FS, AS, FG], user=f"u{i}")
                  for i in range(4)]
        with pytest.raises(InsufficientData):
            run_experiment(corpus, TaskSpec(), [LABELS_ONLY], seed=0)

    def test_render_report_table(self, report):
        table = render_report_table(report)
        lines = table.splitlines()
        assert lines[0].split() == ["Config", "Precision", "Recall", "F1", "AUC"]
        assert {line.split()[0] for line in lines[2:]} == {"text", "labels", "both"}

    def test_report_to_json_round_trips(self, report):
        text = report_to_json(report)
        assert json.loads(text) == report
        assert text.startswith("{\n  ")
