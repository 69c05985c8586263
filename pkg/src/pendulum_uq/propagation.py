"""First-order error propagation of g = 4 pi^2 L / T^2.

The best estimate uses the mean of the period readings, so the period
contribution is propagated through the standard error of that mean.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pendulum import FOUR_PI_SQ, Dataset, PendulumSample


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class AnalyticUncertainty:
    g_estimate: float
    sigma_abs: float
    sigma_rel: float
    comp_length: float
    comp_period: float


def _period_stats(periods):
    periods = np.asarray(periods, dtype=float)
    n = periods.shape[-1]
    if n < 2:
        raise InsufficientDataError("need at least 2 period measurements")
    if np.any(periods <= 0):
        raise ValueError("period measurements must be positive")
    # shifted by the first reading: identical readings give exactly zero spread
    dev = periods - periods[..., :1]
    mean = periods[..., 0] + dev.mean(axis=-1)
    sem = dev.std(axis=-1, ddof=1) / np.sqrt(n)
    return mean, sem


def propagate(sample: PendulumSample, length_noise_assumed: float) -> AnalyticUncertainty:
    t_mean, t_sem = _period_stats(sample.period_measurements)
    comp_t = 2.0 * t_sem / t_mean
    comp_l = length_noise_assumed
    g = FOUR_PI_SQ * sample.length_measured / t_mean**2
    rel = float(np.hypot(comp_l, comp_t))
    return AnalyticUncertainty(float(g), rel * float(g), rel, float(comp_l), float(comp_t))


def propagate_dataset(data: Dataset, length_noise_assumed: float | None = None):
    """Vectorised ``propagate`` over a dataset: returns (g_estimate, sigma_rel)."""
    if length_noise_assumed is None:
        length_noise_assumed = data.config.length_noise
    t_mean, t_sem = _period_stats(data.periods)
    g = FOUR_PI_SQ * data.length_measured / t_mean**2
    return g, np.hypot(length_noise_assumed, 2.0 * t_sem / t_mean)


def monte_carlo_propagate(sample: PendulumSample, length_noise_assumed: float,
                          n_draws: int, rng: np.random.Generator) -> float:
    """Relative spread of g from resampling L and the mean period."""
    if n_draws < 10_000:
        raise ValueError("n_draws must be >= 1e4")
    t_mean, t_sem = _period_stats(sample.period_measurements)
    length = rng.normal(sample.length_measured, length_noise_assumed * sample.length_measured, n_draws)
    period = rng.normal(t_mean, t_sem, n_draws)
    g = FOUR_PI_SQ * length / period**2
    return float((g - g[0]).std() / g.mean())
