"""Mean-field Gaussian dense layer sampled with the flipout estimator."""
from __future__ import annotations

import numpy as np

from ..nn import DenseLayer, he_normal, Network, inverse_softplus, register_layer, sigmoid, softplus


def _rademacher(rng, shape):
    return 2.0 * rng.integers(0, 2, size=shape) - 1.0


@register_layer
class FlipoutLayer(DenseLayer):
    """Posterior N(W, softplus(W_rho)^2) per weight, likewise for the bias.

    One Gaussian weight perturbation is shared by the batch and decorrelated
    per example with random sign flips on the input and output side.  Bias
    noise is drawn per example.
    """

    kind = "flipout"
    param_names = ("W", "W_rho", "b", "b_rho")

    def __init__(self, W, W_rho, b, b_rho, activation="relu"):
        super().__init__(W, b, activation)
        self.W_rho = np.asarray(W_rho, dtype=float)
        self.b_rho = np.asarray(b_rho, dtype=float)

    @classmethod
    def init(cls, n_in, n_out, activation, rng, init_sigma=1e-3):
        W = he_normal(rng, n_in, n_out)
        rho = inverse_softplus(init_sigma)
        return cls(W, np.full((n_out, n_in), rho), np.zeros(n_out), np.full(n_out, rho), activation)

    @property
    def W_sigma(self):
        return softplus(self.W_rho)

    @property
    def b_sigma(self):
        return softplus(self.b_rho)

    def forward(self, x, rng=None):
        self._x = x
        z = x @ self.W.T + self.b
        if rng is None:
            self._noise = None
        else:
            n = x.shape[0]
            eps = rng.standard_normal(self.W.shape)
            dW = self.W_sigma * eps
            r = _rademacher(rng, x.shape)
            s = _rademacher(rng, (n, self.n_out))
            eb = rng.standard_normal((n, self.n_out))
            z = z + ((x * r) @ dW.T) * s + self.b_sigma * eb
            self._noise = (eps, dW, r, s, eb)
        return self._activate(z)

    def backward(self, gy):
        gz = self._activation_grad(gy)
        x = self._x
        gx = gz @ self.W
        if self._noise is None:
            g_rho = np.zeros_like(self.W_rho)
            gb_rho = np.zeros_like(self.b_rho)
        else:
            eps, dW, r, s, eb = self._noise
            gs = gz * s
            g_rho = (gs.T @ (x * r)) * eps * sigmoid(self.W_rho)
            gb_rho = np.sum(gz * eb, axis=0) * sigmoid(self.b_rho)
            gx = gx + (gs @ dW) * r
        self.grads = [gz.T @ x, g_rho, gz.sum(axis=0), gb_rho]
        return gx


def kl_diag_gaussian(mu, sigma):
    """KL( N(mu, sigma^2) || N(0, 1) ) summed over all entries."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("posterior stdevs must be positive")
    return float(np.sum(-np.log(sigma) + 0.5 * (sigma**2 + mu**2 - 1.0)))


def network_kl(net: Network) -> float:
    total = 0.0
    for layer in net.layers:
        if isinstance(layer, FlipoutLayer):
            total += kl_diag_gaussian(layer.W, layer.W_sigma)
            total += kl_diag_gaussian(layer.b, layer.b_sigma)
    return total


def kl_penalty(net: Network, n_train: int):
    """KL(posterior || prior) / n_train with gradients aligned to ``net.params()``."""
    grads = []
    for layer in net.layers:
        if not isinstance(layer, FlipoutLayer):
            grads.extend(np.zeros_like(p) for p in layer.params())
            continue
        for mean, rho in ((layer.W, layer.W_rho), (layer.b, layer.b_rho)):
            sig = softplus(rho)
            grads.append(mean / n_train)
            grads.append((sig - 1.0 / sig) * sigmoid(rho) / n_train)
    return network_kl(net) / n_train, grads
