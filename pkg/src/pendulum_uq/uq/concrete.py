"""Concrete dropout: dropout with a learned, per-layer drop probability.

The Bernoulli mask is replaced by its concrete (relaxed) counterpart so the
drop logit gets gradients; the layer drops its *inputs*.
"""
from __future__ import annotations

import numpy as np

from ..nn import DenseLayer, he_normal, Network, register_layer, sigmoid

_TINY = 1e-12


def _logit_uniform(u):
    u = np.clip(u, _TINY, 1.0 - _TINY)
    return np.log(u) - np.log1p(-u)


def relaxed_mask(logit_p, u, temperature):
    """Mask 1 - sigmoid((logit p + logit u)/t) and its derivative w.r.t. logit p."""
    d = sigmoid((logit_p + _logit_uniform(u)) / temperature)
    return 1.0 - d, -d * (1.0 - d) / temperature


def concrete_mask(p, shape, rng, temperature=0.1):
    """Draw a relaxed keep-mask with drop probability ``p`` (values in (0, 1))."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    logit_p = np.log(p) - np.log1p(-p)
    return relaxed_mask(logit_p, rng.random(shape), temperature)[0]


@register_layer
class ConcreteDropoutLayer(DenseLayer):
    kind = "concrete_dropout"
    param_names = ("W", "b", "logit_p")

    def __init__(self, W, b, logit_p, activation="relu", temperature=0.1):
        super().__init__(W, b, activation)
        self.logit_p = np.atleast_1d(np.asarray(logit_p, dtype=float))
        self.temperature = float(temperature)

    @classmethod
    def init(cls, n_in, n_out, activation, rng, init_p=0.1, temperature=0.1):
        W = he_normal(rng, n_in, n_out)
        return cls(W, np.zeros(n_out), [np.log(init_p) - np.log1p(-init_p)],
                   activation, temperature)

    @property
    def p(self) -> float:
        return float(sigmoid(self.logit_p[0]))

    def hyper(self):
        return {"temperature": self.temperature}

    def forward(self, x, rng=None):
        self._x = x
        if rng is None:
            self._scaled = None
            xd = x
        else:
            a = self.logit_p[0]
            mask, dmask = relaxed_mask(a, rng.random(x.shape), self.temperature)
            scale = 1.0 + np.exp(a)  # 1/(1-p)
            self._scaled = mask * scale
            # d(mask*scale)/d logit_p, using d scale/d logit_p = scale*p
            self._dscaled = scale * (dmask + mask * sigmoid(a))
            xd = x * self._scaled
        self._xd = xd
        return self._activate(xd @ self.W.T + self.b)

    def backward(self, gy):
        gz = self._activation_grad(gy)
        gxd = gz @ self.W
        if self._scaled is None:
            g_logit = 0.0
            gx = gxd
        else:
            g_logit = float(np.sum(gxd * self._x * self._dscaled))
            gx = gxd * self._scaled
        self.grads = [gz.T @ self._xd, gz.sum(axis=0), np.array([g_logit])]
        return gx


def cd_regularizer(net: Network, n_train: int, length_scale_sq=1e-4, dropout_scale=1.0):
    """Weight-decay plus dropout-entropy penalty, with gradients aligned to ``net.params()``.

    Per concrete layer: l^2 ||W||^2 / ((1-p) n) + (K/n) d (p log p + (1-p) log(1-p)),
    K the layer input width.
    """
    total = 0.0
    grads = []
    for layer in net.layers:
        if not isinstance(layer, ConcreteDropoutLayer):
            grads.extend(np.zeros_like(p) for p in layer.params())
            continue
        a = layer.logit_p[0]
        p = sigmoid(a)
        inv_keep = 1.0 + np.exp(a)
        w2 = float(np.sum(layer.W**2))
        k = layer.n_in
        # p log p + (1-p) log(1-p), written in logit form for stability at tiny p
        neg_entropy = -np.logaddexp(0.0, a) + p * a
        total += length_scale_sq * w2 * inv_keep / n_train
        total += k / n_train * dropout_scale * neg_entropy
        g_a = length_scale_sq * w2 * (inv_keep - 1.0) / n_train
        g_a += k / n_train * dropout_scale * a * p * (1.0 - p)
        grads.append(2.0 * length_scale_sq * inv_keep / n_train * layer.W)
        grads.append(np.zeros_like(layer.b))
        grads.append(np.array([g_a]))
    return float(total), grads


def dropout_probabilities(net: Network) -> list[float]:
    return [layer.p for layer in net.layers if isinstance(layer, ConcreteDropoutLayer)]
