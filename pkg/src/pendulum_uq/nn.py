"""Small numpy engine for dense regression networks with a Gaussian head.

Everything runs in float64.  Layers own their parameters and cache what
their backward pass needs; the network adds input standardisation and the
(mean, scale) output transform.
"""
from __future__ import annotations

import io
import json
import logging
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
SIGMA_FLOOR = 1e-6

LAYER_KINDS: dict[str, type] = {}


class NumericError(ArithmeticError):
    pass


class DivergenceError(NumericError):
    pass


def register_layer(cls):
    LAYER_KINDS[cls.kind] = cls
    return cls


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def inverse_softplus(y):
    return np.log(np.expm1(y))


def he_normal(rng, n_in, n_out):
    return rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))


@register_layer
class DenseLayer:
    kind = "dense"
    param_names = ("W", "b")

    def __init__(self, W, b, activation="relu"):
        if activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {activation!r}")
        self.W = np.asarray(W, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.activation = activation
        self.grads: list[np.ndarray] = []

    @classmethod
    def init(cls, n_in, n_out, activation, rng, **kw):
        return cls(he_normal(rng, n_in, n_out), np.zeros(n_out), activation, **kw)

    @property
    def n_in(self):
        return self.W.shape[1]

    @property
    def n_out(self):
        return self.W.shape[0]

    def params(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in self.param_names]

    def _activate(self, z):
        self._z = z
        return np.maximum(z, 0.0) if self.activation == "relu" else z

    def _activation_grad(self, gy):
        # subgradient of relu at 0 is taken as 0
        return gy * (self._z > 0) if self.activation == "relu" else gy

    def forward(self, x, rng=None):
        self._x = x
        return self._activate(x @ self.W.T + self.b)

    def backward(self, gy):
        gz = self._activation_grad(gy)
        self.grads = [gz.T @ self._x, gz.sum(axis=0)]
        return gz @ self.W

    def hyper(self) -> dict:
        return {}

    def state(self) -> dict:
        return {"kind": self.kind, "activation": self.activation, "hyper": self.hyper(),
                "params": {n: getattr(self, n) for n in self.param_names}}

    @classmethod
    def from_state(cls, state: dict):
        return cls(*(state["params"][n] for n in cls.param_names),
                   activation=state["activation"], **state["hyper"])


@dataclass
class GaussianPrediction:
    mu: np.ndarray
    sigma: np.ndarray


def nll_loss(mu, sigma, target):
    """Per-point Gaussian negative log likelihood."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    z = (np.asarray(target) - mu) / sigma
    return HALF_LOG_2PI + np.log(sigma) + 0.5 * z**2


class Network:
    """Feed-forward stack of layers ending in a 2-unit (mean, raw scale) head."""

    def __init__(self, layers, x_mean=None, x_std=None, sigma_floor=SIGMA_FLOOR):
        if layers[-1].n_out != 2:
            raise ValueError("output head must have 2 units")
        for i, (a, b) in enumerate(zip(layers, layers[1:])):
            if a.n_out != b.n_in:
                raise ValueError(f"layer {i} outputs {a.n_out} but layer {i + 1} expects {b.n_in}")
        self.layers = list(layers)
        n_in = layers[0].n_in
        self.x_mean = np.zeros(n_in) if x_mean is None else np.asarray(x_mean, dtype=float)
        self.x_std = np.ones(n_in) if x_std is None else np.asarray(x_std, dtype=float)
        self.sigma_floor = sigma_floor

    @property
    def n_inputs(self):
        return self.layers[0].n_in

    def fit_standardizer(self, x):
        x = np.asarray(x, dtype=float)
        self.x_mean = x.mean(axis=0)
        std = x.std(axis=0)
        self.x_std = np.where(std > 0, std, 1.0)

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def raw(self, x, rng=None):
        h = (np.atleast_2d(np.asarray(x, dtype=float)) - self.x_mean) / self.x_std
        for i, layer in enumerate(self.layers):
            h = layer.forward(h, rng)
            if not np.all(np.isfinite(h)):
                raise NumericError(f"non-finite activations in layer {i}")
        return h

    def forward(self, x, rng=None) -> GaussianPrediction:
        """Predict (mu, sigma); ``rng=None`` switches stochastic layers to their mean behaviour."""
        out = self.raw(x, rng)
        return GaussianPrediction(out[:, 0], softplus(out[:, 1]) + self.sigma_floor)

    def loss_and_grads(self, x, y, rng=None):
        """Mean NLL over the batch and its gradient w.r.t. ``params()``."""
        y = np.asarray(y, dtype=float)
        out = self.raw(x, rng)
        if out.shape[0] != y.shape[0]:
            raise ValueError(f"batch has {out.shape[0]} inputs but {y.shape[0]} targets")
        n = y.shape[0]
        mu = out[:, 0]
        sigma = softplus(out[:, 1]) + self.sigma_floor
        r = y - mu
        loss = float(np.mean(HALF_LOG_2PI + np.log(sigma) + 0.5 * (r / sigma) ** 2))
        g = np.empty_like(out)
        g[:, 0] = -r / sigma**2 / n
        g[:, 1] = (1.0 / sigma - r**2 / sigma**3) * sigmoid(out[:, 1]) / n
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return loss, self.grads()

    def state(self) -> dict:
        return {"layers": [layer.state() for layer in self.layers],
                "x_mean": self.x_mean, "x_std": self.x_std, "sigma_floor": self.sigma_floor}

    @classmethod
    def from_state(cls, state: dict) -> "Network":
        layers = [LAYER_KINDS[s["kind"]].from_state(s) for s in state["layers"]]
        return cls(layers, state["x_mean"], state["x_std"], state["sigma_floor"])


def build_network(n_inputs=13, hidden=(100, 100, 100), rng=None, layer_cls=DenseLayer,
                  layer_kw=None, plain_first=False) -> Network:
    """ReLU hidden stack plus identity 2-unit head.

    With ``plain_first`` the first layer is an ordinary dense layer regardless
    of ``layer_cls`` (used to keep dropout off the raw measurements).
    """
    rng = np.random.default_rng() if rng is None else rng
    sizes = [n_inputs, *hidden, 2]
    layers = []
    for i, (a, b) in enumerate(zip(sizes, sizes[1:])):
        act = "identity" if i == len(sizes) - 2 else "relu"
        if i == 0 and plain_first:
            layers.append(DenseLayer.init(a, b, act, rng))
        else:
            layers.append(layer_cls.init(a, b, act, rng, **(layer_kw or {})))
    return Network(layers)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 40
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size and epochs must be positive")


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        """In-place bias-corrected Adam update."""
        if len(params) != len(grads):
            raise ValueError("params and grads differ in length")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    nll: list[float] = field(default_factory=list)
    penalty: list[float] = field(default_factory=list)


ExtraLoss = Callable[[Network], "tuple[float, list[np.ndarray]]"]


def train(net: Network, x, y, config: TrainConfig, extra_loss: ExtraLoss | None = None,
          rng: np.random.Generator | None = None) -> TrainHistory:
    """Epoch-shuffled minibatch Adam on mean NLL (+ optional penalty).

    Fits the input standardiser on ``x`` first.  Raises DivergenceError on a
    non-finite loss.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    net.fit_standardizer(x)
    params = net.params()
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    hist = TrainHistory()
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        nll_sum = pen_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            try:
                nll, grads = net.loss_and_grads(x[idx], y[idx], rng)
            except NumericError as e:
                raise DivergenceError(f"epoch {epoch}: {e}") from e
            pen = 0.0
            if extra_loss is not None:
                pen, pgrads = extra_loss(net)
                grads = [g + pg for g, pg in zip(grads, pgrads)]
            if not np.isfinite(nll + pen):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            opt.step(params, grads)
            nll_sum += nll * len(idx)
            pen_sum += pen * len(idx)
        hist.nll.append(nll_sum / n)
        hist.penalty.append(pen_sum / n)
        hist.loss.append(hist.nll[-1] + hist.penalty[-1])
        log.debug("epoch %d loss %.5f", epoch, hist.loss[-1])
    return hist


def save_network(net: Network, path, meta: dict | None = None) -> None:
    """Write a self-describing .npz checkpoint (arrays + JSON layer description)."""
    state = net.state()
    arrays = {"x_mean": state["x_mean"], "x_std": state["x_std"]}
    layers = []
    for i, s in enumerate(state["layers"]):
        desc = {k: s[k] for k in ("kind", "activation", "hyper")}
        desc["params"] = {}
        for name, arr in s["params"].items():
            key = f"layer{i}/{name}"
            arrays[key] = arr
            desc["params"][name] = {"key": key, "shape": list(arr.shape)}
        layers.append(desc)
    header = {"format": "pendulum_uq.network/1", "sigma_floor": state["sigma_floor"],
              "layers": layers, "meta": meta or {}}
    arrays["header"] = np.array(json.dumps(header, sort_keys=True, default=_jsonable))
    write_npz(path, arrays)


def write_npz(path, arrays: dict) -> None:
    """np.savez-compatible archive with fixed timestamps (byte-reproducible)."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for key in sorted(arrays):
            info = zipfile.ZipInfo(key + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asanyarray(arrays[key]), allow_pickle=False)
            zf.writestr(info, buf.getvalue())


def load_network(path) -> tuple[Network, dict]:
    with np.load(path) as z:
        header = json.loads(str(z["header"]))
        layers = []
        for desc in header["layers"]:
            params = {n: z[p["key"]].copy() for n, p in desc["params"].items()}
            layers.append({"kind": desc["kind"], "activation": desc["activation"],
                           "hyper": desc["hyper"], "params": params})
        state = {"layers": layers, "x_mean": z["x_mean"].copy(), "x_std": z["x_std"].copy(),
                 "sigma_floor": header["sigma_floor"]}
    return Network.from_state(state), header["meta"]


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o)}")
