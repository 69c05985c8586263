"""Equal-weight Gaussian mixture summary of N stochastic (mu, sigma) predictions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PredictiveSummary:
    g_hat: np.ndarray
    sigma_al: np.ndarray
    sigma_ep: np.ndarray
    sigma_pr: np.ndarray
    n_components: int

    def __len__(self):
        return np.size(self.g_hat)


def combine(mu, sigma) -> PredictiveSummary:
    """Combine component predictions stacked along axis 0.

    ``mu`` and ``sigma`` have shape (N,) or (N, n_points).  The epistemic part
    is the population (divide-by-N) spread of the component means.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if mu.shape != sigma.shape:
        raise ValueError("mu and sigma must have the same shape")
    if mu.shape[0] < 2:
        raise ValueError("need at least 2 components for an epistemic spread")
    if np.any(sigma <= 0):
        raise ValueError("component sigmas must be positive")
    # work relative to the first component: equal means give exactly g_hat = mu and zero spread
    dev = mu - mu[0]
    shift = dev.mean(axis=0)
    g_hat = mu[0] + shift
    sigma_al = np.sqrt(np.mean(sigma**2, axis=0))
    # centred form of sqrt(mean(mu^2) - g_hat^2); avoids cancellation when the spread is tiny
    sigma_ep = np.sqrt(np.mean((dev - shift) ** 2, axis=0))
    sigma_pr = np.sqrt(sigma_al**2 + sigma_ep**2)
    return PredictiveSummary(g_hat, sigma_al, sigma_ep, sigma_pr, mu.shape[0])
