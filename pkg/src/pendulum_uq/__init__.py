"""Benchmarking deep-learning uncertainty estimates against error propagation
on a simulated pendulum experiment."""

from .pendulum import (Dataset, OodSpec, PendulumConfig, PendulumSample, generate_dataset,
                       generate_ood_dataset, gravitational_accel, sample_pendulum, true_period)
from .propagation import AnalyticUncertainty, monte_carlo_propagate, propagate, propagate_dataset

__version__ = "0.1.0"
