"""Evaluation metrics: calibration, correlation with the analytic truth, accuracy."""
from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .pendulum import Dataset
from .propagation import propagate_dataset
from .uq.mixture import PredictiveSummary
from .uq.models import predict

DEFAULT_GRID = np.round(np.arange(1, 20) * 0.05, 10)
CONSTANT_THRESHOLD = 0.2


class UndefinedCorrelationError(ValueError):
    pass


def central_z(q):
    """Half-width, in standard deviations, of the central normal interval with mass q."""
    nd = NormalDist()
    return np.array([nd.inv_cdf(0.5 + 0.5 * v) for v in np.atleast_1d(q)])


@dataclass
class ReliabilityCurve:
    nominal: np.ndarray
    empirical: np.ndarray
    n_samples: int

    @property
    def max_abs_error(self) -> float:
        return float(np.max(np.abs(self.empirical - self.nominal)))

    @property
    def max_deficit(self) -> float:
        """Largest amount by which coverage falls short of nominal (overconfidence)."""
        return float(np.max(self.nominal - self.empirical))


def reliability_curve(pred: PredictiveSummary, truths, grid=DEFAULT_GRID) -> ReliabilityCurve:
    truths = np.asarray(truths, dtype=float)
    if truths.size == 0:
        raise ValueError("reliability curve needs at least one sample")
    if truths.shape != np.shape(pred.g_hat):
        raise ValueError("predictions and truths differ in length")
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0 or grid[-1] >= 1:
        raise ValueError("nominal grid must be strictly increasing inside (0, 1)")
    resid = np.abs(truths - pred.g_hat)
    emp = np.array([np.mean(resid <= z * pred.sigma_pr) for z in central_z(grid)])
    return ReliabilityCurve(grid, emp, truths.size)


def pearson_correlation(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = np.dot(dx, dx), np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation undefined for a constant sample")
    return float(np.clip(np.dot(dx, dy) / np.sqrt(sxx * syy), -1.0, 1.0))


@dataclass
class UncertaintyComparison:
    analytic_sigma_rel: np.ndarray
    predicted_sigma_rel: np.ndarray
    predicted_ep_rel: np.ndarray
    g_true: np.ndarray
    g_hat: np.ndarray

    def __len__(self):
        return len(self.g_true)

    @property
    def pearson_r(self) -> float:
        try:
            return pearson_correlation(self.predicted_sigma_rel, self.analytic_sigma_rel)
        except UndefinedCorrelationError:
            return float("nan")

    @property
    def rmse_g(self) -> float:
        return float(np.sqrt(np.mean((self.g_hat - self.g_true) ** 2)))


def compare_uncertainty(pred: PredictiveSummary, data: Dataset) -> UncertaintyComparison:
    """Join predictions with the analytic propagation for the same samples.

    Predicted relative uncertainty is sigma_al / g_hat (no labels needed).
    """
    _, analytic = propagate_dataset(data)
    return UncertaintyComparison(
        analytic_sigma_rel=analytic,
        predicted_sigma_rel=pred.sigma_al / pred.g_hat,
        predicted_ep_rel=pred.sigma_ep / pred.g_hat,
        g_true=data.g_true,
        g_hat=pred.g_hat,
    )


def detect_constant_relative_uncertainty(comp: UncertaintyComparison,
                                         threshold: float = CONSTANT_THRESHOLD):
    """Flag predictions whose relative uncertainty barely varies between points.

    Statistic: stdev(predicted sigma_rel) / stdev(analytic sigma_rel).
    Returns (flag, statistic).
    """
    ref = np.std(comp.analytic_sigma_rel)
    stat = float(np.std(comp.predicted_sigma_rel) / ref) if ref > 0 else float("inf")
    return stat < threshold, stat


def accuracy_metrics(g_hat, truths):
    """(rmse, mean absolute error, mean signed error), errors taken as g_hat - truth."""
    err = np.asarray(g_hat, dtype=float) - np.asarray(truths, dtype=float)
    if err.size == 0:
        raise ValueError("empty input")
    return float(np.sqrt(np.mean(err**2))), float(np.mean(np.abs(err))), float(np.mean(err))


def epistemic_vs_distance(model, sweep, n_passes=10, rng=None):
    """Median sigma_ep over each dataset of a sweep.

    ``sweep`` is a list of (shift label, Dataset); returns [(label, median)].
    """
    if len(sweep) < 2:
        raise ValueError("need at least 2 shift levels")
    out = []
    for label, data in sweep:
        pred = predict(model, data.inputs(), n_passes, rng)
        out.append((label, float(np.median(pred.sigma_ep))))
    return out
