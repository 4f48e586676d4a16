"""Prefix-based session outcome forecasting: tasks, features, model, synthesis."""

from forager.forecasting.experiment import (
    render_report_table,
    report_to_json,
    run_experiment,
)
from forager.forecasting.features import FeatureConfig, featurize
from forager.forecasting.linear import LogisticModel, loss_and_grad, train_logistic
from forager.forecasting.synth import SynthParams, generate_synthetic
from forager.forecasting.tasks import (
    ForecastExample,
    TaskSpec,
    build_examples,
    split_by_user,
)

__all__ = [
    "FeatureConfig",
    "ForecastExample",
    "LogisticModel",
    "SynthParams",
    "TaskSpec",
    "build_examples",
    "featurize",
    "generate_synthetic",
    "loss_and_grad",
    "render_report_table",
    "report_to_json",
    "run_experiment",
    "split_by_user",
    "train_logistic",
]
