"""Simulated single-pendulum lab measurements.

Each sample mimics a student's measurement sheet: mass, release angle, one
length reading and ten stopwatch readings of the period.  The hidden labels
(true g, true length, true period, and the per-sample period noise level)
travel with the sample but never enter the model input vector.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np

TWO_PI = 2.0 * np.pi
FOUR_PI_SQ = 4.0 * np.pi**2

N_INPUTS = 13
CHUNK_SIZE = 1024
SPLITS = ("train", "validation", "test", "ood")
OOD_KINDS = ("shift_g", "shift_l_keep_g")


class DomainError(ValueError):
    """Raised when a physical quantity is outside its valid domain."""


def true_period(length, g):
    """Small-angle period 2*pi*sqrt(L/g)."""
    length = np.asarray(length, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(length <= 0) or np.any(g <= 0):
        raise DomainError("length and g must be positive")
    out = TWO_PI * np.sqrt(length / g)
    return float(out) if out.ndim == 0 else out


def gravitational_accel(length, period):
    """g = 4*pi^2 * L / T^2."""
    length = np.asarray(length, dtype=float)
    period = np.asarray(period, dtype=float)
    if np.any(length <= 0) or np.any(period <= 0):
        raise DomainError("length and period must be positive")
    out = FOUR_PI_SQ * length / period**2
    return float(out) if out.ndim == 0 else out


def _check_interval(name, interval, allow_zero=False):
    lo, hi = interval
    if lo > hi:
        raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
    if lo < 0 or (lo == 0 and not allow_zero):
        raise ValueError(f"{name}: lower bound must be positive, got {lo}")


@dataclass(frozen=True)
class PendulumConfig:
    g_range: tuple[float, float] = (5.0, 15.0)
    l_range: tuple[float, float] = (0.2, 0.8)
    mass_range: tuple[float, float] = (0.5, 2.0)
    angle_range: tuple[float, float] = (1.0, 10.0)
    period_noise_range: tuple[float, float] = (0.01, 0.20)
    length_noise: float = 0.02
    n_period_measurements: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("g_range", "l_range", "mass_range", "angle_range", "period_noise_range"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        _check_interval("g_range", self.g_range)
        _check_interval("l_range", self.l_range)
        _check_interval("mass_range", self.mass_range)
        _check_interval("angle_range", self.angle_range)
        # noise levels may be switched off entirely
        _check_interval("period_noise_range", self.period_noise_range, allow_zero=True)
        if self.period_noise_range[1] >= 1:
            raise ValueError("period_noise_range upper bound must be < 1")
        if not 0 <= self.length_noise < 1:
            raise ValueError("length_noise must lie in [0, 1)")
        if self.n_period_measurements < 2:
            raise ValueError("n_period_measurements must be >= 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n_inputs(self) -> int:
        return 3 + self.n_period_measurements

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PendulumConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for k, v in known.items():
            if isinstance(v, list):
                known[k] = tuple(v)
        return cls(**known)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "PendulumConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class OodSpec:
    kind: str
    target_range: tuple[float, float]

    def __post_init__(self):
        if self.kind not in OOD_KINDS:
            raise ValueError(f"unknown OOD kind {self.kind!r}; expected one of {OOD_KINDS}")
        object.__setattr__(self, "target_range", tuple(float(v) for v in self.target_range))
        _check_interval("target_range", self.target_range)

    @property
    def label(self) -> str:
        lo, hi = self.target_range
        var = "g" if self.kind == "shift_g" else "L"
        return f"{var}_{lo:g}-{hi:g}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "target_range": list(self.target_range)}

    @classmethod
    def from_dict(cls, d: dict) -> "OodSpec":
        return cls(d["kind"], tuple(d["target_range"]))


@dataclass(frozen=True)
class PendulumSample:
    mass: float
    angle: float
    length_measured: float
    period_measurements: tuple[float, ...]
    g_true: float
    length_true: float
    period_true: float
    nu: float

    def inputs(self) -> np.ndarray:
        return np.array([self.mass, self.angle, self.length_measured, *self.period_measurements])


def _positive_normal(rng, mean, rel_sd):
    """Normal(mean, rel_sd*mean) draws, redrawing any non-positive entries."""
    mean = np.asarray(mean, dtype=float)
    sd = rel_sd * mean
    out = rng.normal(mean, sd)
    bad = out <= 0
    while np.any(bad):
        out[bad] = rng.normal(mean[bad], sd[bad])
        bad = out <= 0
    return out


def _draw_block(config: PendulumConfig, rng, n, g_range=None, l_range=None) -> dict:
    g_range = config.g_range if g_range is None else g_range
    l_range = config.l_range if l_range is None else l_range
    k = config.n_period_measurements
    g = rng.uniform(*g_range, size=n)
    length = rng.uniform(*l_range, size=n)
    nu = rng.uniform(*config.period_noise_range, size=n)
    mass = rng.uniform(*config.mass_range, size=n)
    angle = rng.uniform(*config.angle_range, size=n)
    period = TWO_PI * np.sqrt(length / g)
    length_meas = _positive_normal(rng, length, config.length_noise)
    periods = _positive_normal(
        rng, np.repeat(period[:, None], k, axis=1), np.repeat(nu[:, None], k, axis=1)
    )
    return dict(
        mass=mass, angle=angle, length_measured=length_meas, periods=periods,
        g_true=g, nu=nu, length_true=length, period_true=period,
    )


def sample_pendulum(config: PendulumConfig, rng: np.random.Generator) -> PendulumSample:
    """Draw a single pendulum measurement set from ``rng``."""
    block = _draw_block(config, rng, 1)
    return PendulumSample(
        mass=float(block["mass"][0]),
        angle=float(block["angle"][0]),
        length_measured=float(block["length_measured"][0]),
        period_measurements=tuple(block["periods"][0].tolist()),
        g_true=float(block["g_true"][0]),
        length_true=float(block["length_true"][0]),
        period_true=float(block["period_true"][0]),
        nu=float(block["nu"][0]),
    )


@dataclass
class Dataset:
    mass: np.ndarray
    angle: np.ndarray
    length_measured: np.ndarray
    periods: np.ndarray
    g_true: np.ndarray
    nu: np.ndarray
    length_true: np.ndarray
    period_true: np.ndarray
    config: PendulumConfig
    split_tag: str = "train"
    ood: OodSpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.g_true) == 0:
            raise ValueError("dataset must be non-empty")
        if self.split_tag not in SPLITS:
            raise ValueError(f"unknown split {self.split_tag!r}")

    def __len__(self) -> int:
        return len(self.g_true)

    def __getitem__(self, i) -> PendulumSample:
        return PendulumSample(
            mass=float(self.mass[i]),
            angle=float(self.angle[i]),
            length_measured=float(self.length_measured[i]),
            period_measurements=tuple(self.periods[i].tolist()),
            g_true=float(self.g_true[i]),
            length_true=float(self.length_true[i]),
            period_true=float(self.period_true[i]),
            nu=float(self.nu[i]),
        )

    def __iter__(self) -> Iterator[PendulumSample]:
        return (self[i] for i in range(len(self)))

    def inputs(self) -> np.ndarray:
        """Model input matrix, shape (n, 13): mass, angle, length, periods."""
        return np.column_stack([self.mass, self.angle, self.length_measured, self.periods])

    def targets(self) -> np.ndarray:
        return self.g_true

    def columns(self) -> list[str]:
        k = self.periods.shape[1]
        return (
            ["mass", "angle", "length_measured"]
            + [f"period_{i + 1}" for i in range(k)]
            + ["g_true", "nu", "length_true", "period_true"]
        )

    def table(self) -> np.ndarray:
        return np.column_stack([self.inputs(), self.g_true, self.nu, self.length_true, self.period_true])

    def to_csv(self, path) -> None:
        np.savetxt(path, self.table(), delimiter=",", header=",".join(self.columns()),
                   comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, config: PendulumConfig, split_tag="train", ood=None) -> "Dataset":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        col = {name: data[:, i] for i, name in enumerate(header)}
        period_cols = [c for c in header if c.startswith("period_") and c != "period_true"]
        return cls(
            mass=col["mass"], angle=col["angle"], length_measured=col["length_measured"],
            periods=np.column_stack([col[c] for c in period_cols]),
            g_true=col["g_true"], nu=col["nu"], length_true=col["length_true"],
            period_true=col["period_true"], config=config, split_tag=split_tag, ood=ood,
        )

    def subset(self, idx) -> "Dataset":
        arrays = {k: getattr(self, k)[idx] for k in
                  ("mass", "angle", "length_measured", "periods", "g_true", "nu",
                   "length_true", "period_true")}
        return replace(self, **arrays)


def _chunk(config, stream_key, c, n, g_range, l_range) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, *stream_key, c]))
    return _draw_block(config, rng, n, g_range, l_range)


def _generate(config, n, stream_key, g_range=None, l_range=None, workers=1) -> dict:
    # one counter-keyed substream per fixed-size chunk of the index space, so
    # any partition of chunks across workers reproduces the serial result
    jobs = [(config, stream_key, c, min(CHUNK_SIZE, n - start), g_range, l_range)
            for c, start in enumerate(range(0, n, CHUNK_SIZE))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            blocks = list(ex.map(_chunk, *zip(*jobs)))
    else:
        blocks = [_chunk(*j) for j in jobs]
    return {k: np.concatenate([b[k] for b in blocks]) for k in blocks[0]}


def generate_dataset(config: PendulumConfig, n: int, split: str = "train", workers: int = 1) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    if split not in SPLITS[:3]:
        raise ValueError(f"split must be one of {SPLITS[:3]}; use generate_ood_dataset for OOD")
    arrays = _generate(config, n, (SPLITS.index(split),), workers=workers)
    return Dataset(**arrays, config=config, split_tag=split)


def generate_ood_dataset(config: PendulumConfig, spec: OodSpec, n: int) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    key = (SPLITS.index("ood"), OOD_KINDS.index(spec.kind))
    if spec.kind == "shift_g":
        arrays = _generate(config, n, key, g_range=spec.target_range)
    else:
        arrays = _generate(config, n, key, l_range=spec.target_range)
    return Dataset(**arrays, config=config, split_tag="ood", ood=spec)
