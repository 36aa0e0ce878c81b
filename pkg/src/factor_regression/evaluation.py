"""
Metrics: normalized least-square error per response dimension, predictive
log-likelihood, selection of the retained sample used for prediction, and
the report and tables built from a finished run.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence

import numpy
from pydantic import BaseModel, Field  # pylint: disable=no-name-in-module

from factor_regression.dataset import RegressionDataset
from factor_regression.errors import CheckpointError, ContractViolation, StructuralError
from factor_regression.gaussian import low_rank_gaussian_logpdf
from factor_regression.records import TimingRecord, TraceRecord

from factor_regression.model import (  # isort: skip
    LatentState,
    joint_log_likelihood,
    predict,
    predict_posterior_mean,
)

logger = logging.getLogger(__name__)

METRICS_FORMAT = "factor-regression-metrics"
METRICS_VERSION = 1
NLSE_NORMALIZATION = "test-set per-dimension variance"
COMPARISON_COLUMNS = [
    "model",
    "nlse_median",
    "nlse_q1",
    "nlse_q3",
    "pred_loglik_median",
    "k_mode",
    "k_median",
    "cpu_seconds_per_iter_median",
    "train_test_delta",
]


class PredictionMode(str, Enum):
    """Which retained sample(s) produce predictions."""

    BEST_SAMPLE = "best_sample"
    POSTERIOR_MEAN = "posterior_mean"


class NlseSummary(BaseModel):  # pylint: disable=too-few-public-methods
    """Median and quartiles of the per-dimension errors."""

    median: float
    q1: float
    q3: float


class MetricsReport(BaseModel):  # pylint: disable=too-few-public-methods
    """Everything reported for one model run."""

    model: str
    nlse_per_dim: List[float]
    nlse_summary: NlseSummary
    train_nlse_per_dim: List[float] = Field(default_factory=list)
    pred_loglik_last100: List[float] = Field(default_factory=list)
    k_last100: List[int] = Field(default_factory=list)
    seconds_per_iter_last100: List[float] = Field(default_factory=list)
    wall_seconds_per_iter_last100: List[float] = Field(default_factory=list)
    train_test_delta: float
    k_mode: Optional[int] = None
    best_log_likelihood: Optional[float] = None
    prediction: PredictionMode = PredictionMode.BEST_SAMPLE
    normalization: str = NLSE_NORMALIZATION
    retained: int = 0


@dataclass(eq=False)
class RunArtifacts:  # pylint: disable=too-many-instance-attributes
    """What a finished chain (or set of chains) leaves behind."""

    model: str
    train: RegressionDataset
    test: RegressionDataset
    tail: List[LatentState]
    trace: List[TraceRecord] = field(default_factory=list)
    timing: List[TimingRecord] = field(default_factory=list)


def nlse(y_hat: numpy.ndarray, y_true: numpy.ndarray) -> numpy.ndarray:
    """
    Σ_m (ŷ_im - y_im)² / Σ_m (y_im - ȳ_i)² per dimension i, with ȳ_i the
    mean over the given columns. A dimension with zero variance gets NaN and a
    warning.
    """
    y_hat = numpy.asarray(y_hat, dtype=float)
    y_true = numpy.asarray(y_true, dtype=float)
    if y_hat.shape != y_true.shape:
        raise StructuralError(f"Predictions {y_hat.shape} and truth {y_true.shape} differ")
    if y_true.ndim != 2 or y_true.shape[1] < 2:
        raise ContractViolation("NLSE needs at least two columns")
    errors = numpy.sum((y_hat - y_true) ** 2, axis=1)
    spread = numpy.sum((y_true - y_true.mean(axis=1, keepdims=True)) ** 2, axis=1)
    flat = spread == 0.0
    if numpy.any(flat):
        logger.warning(
            "Dimensions %s have zero variance; NLSE is undefined there",
            numpy.flatnonzero(flat).tolist(),
        )
    return numpy.where(flat, numpy.nan, errors / numpy.where(flat, 1.0, spread))


def summarize_nlse(values: Sequence[float]) -> NlseSummary:
    """Median and quartiles, leaving out undefined dimensions."""
    values = numpy.asarray(values, dtype=float)
    values = values[numpy.isfinite(values)]
    if values.size == 0:
        return NlseSummary(median=numpy.nan, q1=numpy.nan, q3=numpy.nan)
    q1, median, q3 = numpy.percentile(values, [25, 50, 75])
    return NlseSummary(median=float(median), q1=float(q1), q3=float(q3))


def predictive_log_likelihood(state: LatentState, test_data: RegressionDataset) -> float:
    """
    Σ_n log N(y_n | Q P x_n, Ψ_y + Q Ψ_z Q^T) over the test columns, with the
    latent weights integrated out and no mask.
    """
    residual = test_data.Y - predict(state, test_data.X)
    values = low_rank_gaussian_logpdf(residual, state.psi_y, state.Q, state.psi_z)
    return float(numpy.sum(values))


def frr_predictive_log_likelihood(
    regressor: numpy.ndarray, noise: numpy.ndarray, test_data: RegressionDataset
) -> float:
    """Σ_n log N(y_n | R x_n, diag(noise)) for a full-rank fit."""
    residual = test_data.Y - regressor @ test_data.X
    return float(numpy.sum(low_rank_gaussian_logpdf(residual, noise)))


def select_best_sample(tail: Sequence[LatentState], data: RegressionDataset) -> LatentState:
    """
    The retained state with the highest joint log-likelihood on the training
    data; the latest one wins a tie.
    """
    if not tail:
        raise ContractViolation("Cannot select a sample from an empty tail")
    best_index = 0
    best_value = -numpy.inf
    for index, state in enumerate(tail):
        value = joint_log_likelihood(state, data)
        if value >= best_value:
            best_index, best_value = index, value
    return tail[best_index]


def _mode(values: Sequence[int]) -> Optional[int]:
    if not values:
        return None
    return int(numpy.argmax(numpy.bincount(numpy.asarray(values, dtype=int))))


def summarize(
    artifacts: RunArtifacts,
    prediction: PredictionMode = PredictionMode.BEST_SAMPLE,
    tail_length: int = 100,
) -> MetricsReport:
    """
    Build the report of a finished run: test and train NLSE of the chosen
    predictor, and the last tail_length entries of the trace and timing.
    train_test_delta is the mean over dimensions of test minus train NLSE.
    """
    best = select_best_sample(artifacts.tail, artifacts.train)
    if prediction == PredictionMode.POSTERIOR_MEAN:
        test_hat = predict_posterior_mean(artifacts.tail, artifacts.test.X)
    else:
        test_hat = predict(best, artifacts.test.X)
    columns = artifacts.train.observed_columns
    train_hat = predict(best, artifacts.train.X[:, columns])
    test_nlse = nlse(test_hat, artifacts.test.Y)
    train_nlse = nlse(train_hat, artifacts.train.Y[:, columns])
    trace = artifacts.trace[-tail_length:]
    timing = artifacts.timing[-tail_length:]
    ks = [record.k for record in trace]
    return MetricsReport(
        model=artifacts.model,
        nlse_per_dim=test_nlse.tolist(),
        nlse_summary=summarize_nlse(test_nlse),
        train_nlse_per_dim=train_nlse.tolist(),
        pred_loglik_last100=[
            record.test_log_likelihood
            for record in trace
            if record.test_log_likelihood is not None
        ],
        k_last100=ks,
        seconds_per_iter_last100=[record.cpu_seconds for record in timing],
        wall_seconds_per_iter_last100=[record.wall_seconds for record in timing],
        train_test_delta=_nan_mean(test_nlse - train_nlse),
        k_mode=_mode(ks),
        best_log_likelihood=joint_log_likelihood(best, artifacts.train),
        prediction=prediction,
        retained=len(artifacts.tail),
    )


def summarize_frr(  # pylint: disable=too-many-arguments
    model: str,
    regressor: numpy.ndarray,
    noise: numpy.ndarray,
    train: RegressionDataset,
    test: RegressionDataset,
    timing: TimingRecord,
) -> MetricsReport:
    """Report of a full-rank fit; it has no chain, so its vectors have one entry."""
    columns = train.observed_columns
    test_nlse = nlse(regressor @ test.X, test.Y)
    train_nlse = nlse(regressor @ train.X[:, columns], train.Y[:, columns])
    return MetricsReport(
        model=model,
        nlse_per_dim=test_nlse.tolist(),
        nlse_summary=summarize_nlse(test_nlse),
        train_nlse_per_dim=train_nlse.tolist(),
        pred_loglik_last100=[frr_predictive_log_likelihood(regressor, noise, test)],
        seconds_per_iter_last100=[timing.cpu_seconds],
        wall_seconds_per_iter_last100=[timing.wall_seconds],
        train_test_delta=_nan_mean(test_nlse - train_nlse),
        retained=1,
    )


def _nan_mean(values: numpy.ndarray) -> float:
    finite = values[numpy.isfinite(values)]
    return float(finite.mean()) if finite.size else float("nan")


def write_metrics_report(path: Path, report: MetricsReport) -> None:
    """Write a report as JSON with a format header."""
    payload = {"format": METRICS_FORMAT, "version": METRICS_VERSION}
    payload.update(json.loads(json.dumps(report.dict(), default=str)))
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_metrics_report(path: Path) -> MetricsReport:
    """Read a report written by write_metrics_report."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Metrics file {path} does not exist")
    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload.pop("format", None) != METRICS_FORMAT:
        raise CheckpointError(f"{path} is not a metrics file")
    if payload.pop("version", None) != METRICS_VERSION:
        raise CheckpointError(f"{path} has an unsupported metrics version")
    return MetricsReport.parse_obj(payload)


def comparison_row(report: MetricsReport) -> dict:
    """One row of the comparison table."""
    ks = report.k_last100
    return {
        "model": report.model,
        "nlse_median": report.nlse_summary.median,
        "nlse_q1": report.nlse_summary.q1,
        "nlse_q3": report.nlse_summary.q3,
        "pred_loglik_median": _median(report.pred_loglik_last100),
        "k_mode": "" if report.k_mode is None else report.k_mode,
        "k_median": _median(ks) if ks else "",
        "cpu_seconds_per_iter_median": _median(report.seconds_per_iter_last100),
        "train_test_delta": report.train_test_delta,
    }


def _median(values: Sequence[float]) -> float:
    return float(numpy.median(values)) if len(values) else float("nan")


def write_comparison_table(path: Path, reports: Sequence[MetricsReport]) -> None:
    """Write one row per model as comma separated text under a version comment."""
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        handle.write(f"# {METRICS_FORMAT} v{METRICS_VERSION}\n")
        writer = csv.DictWriter(handle, fieldnames=COMPARISON_COLUMNS)
        writer.writeheader()
        for report in reports:
            writer.writerow(comparison_row(report))


def read_comparison_table(path: Path) -> List[dict]:
    """Read a comparison table back as a list of string dictionaries."""
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        header = handle.readline().strip()
        if header != f"# {METRICS_FORMAT} v{METRICS_VERSION}":
            raise CheckpointError(f"{path} is not a comparison table")
        return list(csv.DictReader(handle))


def write_nlse_table(path: Path, report: MetricsReport) -> None:
    """Per-dimension test and train NLSE, one row per response dimension."""
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        handle.write(f"# {METRICS_FORMAT} v{METRICS_VERSION}\n")
        writer = csv.writer(handle)
        writer.writerow(["dimension", "test_nlse", "train_nlse"])
        train = report.train_nlse_per_dim or [float("nan")] * len(report.nlse_per_dim)
        for index, (test_value, train_value) in enumerate(zip(report.nlse_per_dim, train)):
            writer.writerow([index, repr(test_value), repr(train_value)])
