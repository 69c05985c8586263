"""The three UQ models, their trainers, and on-disk bundles."""
from __future__ import annotations

import json
import shutil
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np

from ..nn import (DivergenceError, Network, TrainConfig, TrainHistory,
                  build_network, load_network, save_network, train)
from .concrete import ConcreteDropoutLayer, cd_regularizer, dropout_probabilities
from .flipout import FlipoutLayer, kl_penalty
from .mixture import PredictiveSummary, combine

METHODS = ("de", "cd", "bnn")
COMPLETE_MARKER = "COMPLETE"


class UntrainedModelError(RuntimeError):
    pass


@dataclass
class MethodConfig:
    method: str
    train: TrainConfig
    hidden: tuple[int, ...] = (100, 100, 100)
    n_members: int = 10
    n_passes: int = 10
    # concrete dropout
    temperature: float = 0.1
    length_scale_sq: float = 1e-4
    dropout_scale: float = 1.0
    init_p: float = 0.1
    # flipout posterior
    init_sigma: float = 1e-3

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        self.hidden = tuple(self.hidden)

    @classmethod
    def default(cls, method: str, seed: int = 0, epoch_divisor: int = 1, **overrides):
        """Adam, lr 1e-3 (1e-4 for BNN), 40 epochs DE, 200 CD/BNN.

        ``overrides`` may hold a ``train`` dict of TrainConfig fields.
        """
        lr = 1e-4 if method == "bnn" else 1e-3
        epochs = 40 if method == "de" else 200
        tc = TrainConfig(learning_rate=lr, epochs=max(1, epochs // epoch_divisor), seed=seed)
        tc = replace(tc, **overrides.pop("train", {}))
        return cls(method=method, train=tc, **overrides)

    def with_seed(self, seed: int) -> "MethodConfig":
        return replace(self, train=replace(self.train, seed=seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class DeepEnsemble:
    members: list[Network]
    histories: list[TrainHistory] = field(default_factory=list)
    method = "de"

    def networks(self):
        return self.members

    def sample(self, x, n_passes, rng):
        preds = [m.forward(x) for m in self.members]
        return np.stack([p.mu for p in preds]), np.stack([p.sigma for p in preds])


@dataclass
class _StochasticModel:
    net: Network
    histories: list[TrainHistory] = field(default_factory=list)

    def networks(self):
        return [self.net]

    def sample(self, x, n_passes, rng):
        # rng=None disables the sampling noise: every pass is the mean network
        preds = [self.net.forward(x, rng) for _ in range(n_passes)]
        return np.stack([p.mu for p in preds]), np.stack([p.sigma for p in preds])


class ConcreteDropoutModel(_StochasticModel):
    method = "cd"

    def dropout_probabilities(self) -> list[float]:
        return dropout_probabilities(self.net)


class BnnModel(_StochasticModel):
    method = "bnn"


MODEL_CLASSES = {"de": DeepEnsemble, "cd": ConcreteDropoutModel, "bnn": BnnModel}


def train_deep_ensemble(x, y, config: MethodConfig) -> DeepEnsemble:
    """Independently initialised members with seeds base_seed + i; no bagging."""
    members, hists = [], []
    for i in range(config.n_members):
        seed = config.train.seed + i
        rng = np.random.default_rng(seed)
        net = build_network(x.shape[1], config.hidden, rng)
        try:
            hists.append(train(net, x, y, replace(config.train, seed=seed), rng=rng))
        except DivergenceError as e:
            raise DivergenceError(f"ensemble member {i} (seed {seed}): {e}") from e
        members.append(net)
    return DeepEnsemble(members, hists)


def train_concrete_dropout(x, y, config: MethodConfig) -> ConcreteDropoutModel:
    rng = np.random.default_rng(config.train.seed)
    net = build_network(x.shape[1], config.hidden, rng, ConcreteDropoutLayer,
                        {"init_p": config.init_p, "temperature": config.temperature},
                        plain_first=True)
    reg = partial(cd_regularizer, n_train=len(y), length_scale_sq=config.length_scale_sq,
                  dropout_scale=config.dropout_scale)
    hist = train(net, x, y, config.train, extra_loss=reg, rng=rng)
    return ConcreteDropoutModel(net, [hist])


def train_bnn(x, y, config: MethodConfig) -> BnnModel:
    """All layers variational; loss = mean NLL + KL / n_train."""
    rng = np.random.default_rng(config.train.seed)
    net = build_network(x.shape[1], config.hidden, rng, FlipoutLayer,
                        {"init_sigma": config.init_sigma})
    hist = train(net, x, y, config.train, extra_loss=partial(kl_penalty, n_train=len(y)), rng=rng)
    return BnnModel(net, [hist])


TRAINERS = {"de": train_deep_ensemble, "cd": train_concrete_dropout, "bnn": train_bnn}


def train_model(x, y, config: MethodConfig):
    return TRAINERS[config.method](np.asarray(x, dtype=float), np.asarray(y, dtype=float), config)


def predict(model, x, n_passes: int = 10, rng: np.random.Generator | None = None,
            batch_size: int = 4096) -> PredictiveSummary:
    """Combine N stochastic (mu, sigma) draws per input into a PredictiveSummary.

    DE uses one pass per member; CD and BNN draw ``n_passes`` masks/posterior
    samples, independently per input point.
    """
    if not model.histories:
        raise UntrainedModelError(f"{type(model).__name__} has not been trained")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mus, sigmas = [], []
    for start in range(0, len(x), batch_size):
        mu, sigma = model.sample(x[start:start + batch_size], n_passes, rng)
        mus.append(mu)
        sigmas.append(sigma)
    return combine(np.concatenate(mus, axis=1), np.concatenate(sigmas, axis=1))


def save_model(model, path, meta: dict | None = None) -> Path:
    """Write a bundle directory atomically; COMPLETE is written last."""
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    nets = model.networks()
    for i, net in enumerate(nets):
        save_network(net, tmp / f"net_{i:02d}.npz")
    info = {
        "format": "pendulum_uq.bundle/1",
        "method": model.method,
        "n_networks": len(nets),
        "histories": [asdict(h) for h in model.histories],
        "meta": meta or {},
    }
    if isinstance(model, ConcreteDropoutModel):
        info["dropout_probabilities"] = model.dropout_probabilities()
    (tmp / "bundle.json").write_text(json.dumps(info, indent=1, sort_keys=True) + "\n")
    (tmp / COMPLETE_MARKER).write_text("")
    if path.exists():
        shutil.rmtree(path)
    tmp.rename(path)
    return path


def load_model(path):
    path = Path(path)
    if not (path / COMPLETE_MARKER).exists():
        raise FileNotFoundError(f"no complete model bundle at {path}")
    info = json.loads((path / "bundle.json").read_text())
    nets = [load_network(path / f"net_{i:02d}.npz")[0] for i in range(info["n_networks"])]
    hists = [TrainHistory(**h) for h in info["histories"]]
    cls = MODEL_CLASSES[info["method"]]
    model = cls(nets, hists) if cls is DeepEnsemble else cls(nets[0], hists)
    return model, info["meta"]

