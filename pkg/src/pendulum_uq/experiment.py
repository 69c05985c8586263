"""End-to-end experiment pipeline: generate -> train -> evaluate -> report.

Directory layout under the output root::

    data/       train.csv, validation.csv, test.csv, ood_<label>.csv, manifest.json
    models/     <method>_seed<k>/ bundles (COMPLETE marker written last)
    eval/       <method>_seed<k>/<dataset>/{predictions,reliability,metrics}.csv,
                summary.csv, aggregate.csv, manifest.json
    figures/    fig1_noise.csv, fig2_ood.csv, fig3_calibration.csv (+ optional .svg)

No file carries timestamps, so identical plans reproduce identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .metrics import (accuracy_metrics, compare_uncertainty, detect_constant_relative_uncertainty,
                      reliability_curve)
from .pendulum import Dataset, OodSpec, PendulumConfig, generate_dataset, generate_ood_dataset
from .propagation import propagate_dataset
from .uq.models import METHODS, ConcreteDropoutModel, MethodConfig, load_model, predict, save_model, train_model

log = logging.getLogger(__name__)

NOISE_RANGES = ((0.01, 0.05), (0.01, 0.10), (0.01, 0.20))
G_SWEEP = ((15.0, 17.0), (17.0, 20.0), (20.0, 25.0))
L_SWEEP = ((0.8, 1.2), (1.2, 1.6), (1.6, 2.4))
FULL_SIZES = (90_000, 10_000, 10_000)
REDUCED_SIZES = (9_000, 1_000, 1_000)


class MissingArtifactError(FileNotFoundError):
    pass


class IntegrityError(RuntimeError):
    pass


def default_ood_specs() -> list[OodSpec]:
    return [OodSpec("shift_g", r) for r in G_SWEEP] + [OodSpec("shift_l_keep_g", r) for r in L_SWEEP]


@dataclass
class ExperimentPlan:
    name: str
    noise_range: tuple[float, float] = (0.01, 0.20)
    methods: tuple[str, ...] = METHODS
    ood_specs: list[OodSpec] = field(default_factory=default_ood_specs)
    n_runs: int = 6
    seeds: list[int] | None = None
    reduced_scale: bool = False
    data_seed: int = 12345
    # per-method MethodConfig overrides, e.g. {"cd": {"temperature": 0.1}}
    method_overrides: dict = field(default_factory=dict)
    # explicit size/epoch overrides; None means "from the scale flag"
    sizes: tuple[int, int, int] | None = None
    epoch_divisor: int | None = None

    def __post_init__(self):
        self.noise_range = tuple(float(v) for v in self.noise_range)
        if self.noise_range not in NOISE_RANGES:
            raise ValueError(f"noise_range must be one of {NOISE_RANGES}")
        self.methods = tuple(self.methods)
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ValueError(f"methods must be a non-empty subset of {METHODS}")
        self.ood_specs = [s if isinstance(s, OodSpec) else OodSpec.from_dict(s) for s in self.ood_specs]
        if self.seeds is None:
            # spaced so ensemble member seeds (seed + i) never collide between runs
            self.seeds = [100 * k for k in range(self.n_runs)]
        self.seeds = [int(s) for s in self.seeds]
        if len(self.seeds) != self.n_runs:
            raise ValueError("n_runs must equal len(seeds)")
        if self.sizes is not None:
            self.sizes = tuple(int(v) for v in self.sizes)

    @property
    def dataset_sizes(self) -> tuple[int, int, int]:
        if self.sizes is not None:
            return self.sizes
        return REDUCED_SIZES if self.reduced_scale else FULL_SIZES

    @property
    def divisor(self) -> int:
        if self.epoch_divisor is not None:
            return self.epoch_divisor
        return 4 if self.reduced_scale else 1

    def pendulum_config(self) -> PendulumConfig:
        return PendulumConfig(period_noise_range=self.noise_range, seed=self.data_seed)

    def method_config(self, method: str, seed: int) -> MethodConfig:
        return MethodConfig.default(method, seed=seed, epoch_divisor=self.divisor,
                                    **self.method_overrides.get(method, {}))

    def with_seed_offset(self, offset: int) -> "ExperimentPlan":
        return replace(self, seeds=[s + offset for s in self.seeds])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ood_specs"] = [s.to_dict() for s in self.ood_specs]
        d["noise_range"] = list(self.noise_range)
        d["methods"] = list(self.methods)
        if self.sizes is not None:
            d["sizes"] = list(self.sizes)
        return d

    def plan_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown plan fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"missing artifact: {path}")
    return json.loads(path.read_text())


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _read_csv(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"missing artifact: {path}")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def dataset_names(plan: ExperimentPlan) -> list[str]:
    return ["train", "validation", "test"] + [f"ood_{s.label}" for s in plan.ood_specs]


def cmd_generate(plan: ExperimentPlan, out_dir) -> Path:
    """Write train/validation/test and every OOD dataset plus a manifest."""
    out = Path(out_dir) / "data"
    out.mkdir(parents=True, exist_ok=True)
    cfg = plan.pendulum_config()
    cfg.save(out / "config.json")
    n_train, n_val, n_test = plan.dataset_sizes
    files = {}
    for split, n in zip(("train", "validation", "test"), (n_train, n_val, n_test)):
        path = out / f"{split}.csv"
        generate_dataset(cfg, n, split).to_csv(path)
        files[split] = {"file": path.name, "n": n, "split": split, "sha256": _sha256(path)}
    for spec in plan.ood_specs:
        name = f"ood_{spec.label}"
        path = out / f"{name}.csv"
        generate_ood_dataset(cfg, spec, n_test).to_csv(path)
        files[name] = {"file": path.name, "n": n_test, "split": "ood", "ood": spec.to_dict(),
                       "sha256": _sha256(path)}
    _write_json(out / "manifest.json", {
        "plan": plan.name, "plan_hash": plan.plan_hash(), "seed": plan.data_seed,
        "config_hash": cfg.config_hash(), "config": cfg.to_dict(), "datasets": files,
    })
    log.info("generated %d datasets in %s", len(files), out)
    return out


def _data_manifest(plan: ExperimentPlan, data_dir) -> dict:
    man = _read_json(Path(data_dir) / "manifest.json")
    expected = plan.pendulum_config().config_hash()
    if man["config_hash"] != expected:
        raise IntegrityError(
            f"dataset config hash {man['config_hash']} in {data_dir} does not match plan "
            f"{plan.name!r} ({expected}); regenerate the data for this plan")
    return man


def load_split(plan: ExperimentPlan, data_dir, name: str, check_hash=True) -> Dataset:
    man = _data_manifest(plan, data_dir)
    if name not in man["datasets"]:
        raise MissingArtifactError(f"dataset {name!r} not listed in {data_dir}/manifest.json")
    entry = man["datasets"][name]
    path = Path(data_dir) / entry["file"]
    if not path.exists():
        raise MissingArtifactError(f"missing artifact: {path}")
    if check_hash and _sha256(path) != entry["sha256"]:
        raise IntegrityError(f"{path} does not match the checksum recorded in its manifest")
    ood = OodSpec.from_dict(entry["ood"]) if "ood" in entry else None
    return Dataset.from_csv(path, PendulumConfig.from_dict(man["config"]), entry["split"], ood)


def bundle_name(method: str, seed: int) -> str:
    return f"{method}_seed{seed}"


def _train_job(plan_dict: dict, data_dir: str, models_dir: str, method: str, seed: int) -> str:
    plan = ExperimentPlan.from_dict(plan_dict)
    with threadpool_limits(1):
        man = _data_manifest(plan, data_dir)
        train = load_split(plan, data_dir, "train")
        val = load_split(plan, data_dir, "validation")
        mcfg = plan.method_config(method, seed)
        log.info("training %s seed %d (%d points, %d epochs)", method, seed, len(train),
                 mcfg.train.epochs)
        model = train_model(train.inputs(), train.g_true, mcfg)
        vpred = predict(model, val.inputs(), mcfg.n_passes, np.random.default_rng([seed, 1]))
        meta = {
            "plan": plan.name, "plan_hash": plan.plan_hash(), "seed": seed, "method": method,
            "config_hash": man["config_hash"], "train_sha256": man["datasets"]["train"]["sha256"],
            "method_config": mcfg.to_dict(),
            "validation_rmse": accuracy_metrics(vpred.g_hat, val.g_true)[0],
        }
        save_model(model, Path(models_dir) / bundle_name(method, seed), meta)
    return bundle_name(method, seed)


def _run_jobs(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(fn, *j) for j in jobs]
        return [f.result() for f in futures]


def cmd_train(plan: ExperimentPlan, data_dir, out_dir, workers: int = 1) -> list[str]:
    """Train one bundle per (method, seed)."""
    data_dir = Path(data_dir)
    _data_manifest(plan, data_dir)
    models = Path(out_dir) / "models"
    models.mkdir(parents=True, exist_ok=True)
    jobs = [(plan.to_dict(), str(data_dir), str(models), m, s)
            for m in plan.methods for s in plan.seeds]
    return _run_jobs(_train_job, jobs, workers)


PRED_COLUMNS = ["g_true", "g_hat", "sigma_al", "sigma_ep", "sigma_pr", "nu", "length_true",
                "length_measured", "analytic_g", "analytic_sigma_rel"]


def _dataset_stream(name: str) -> int:
    return zlib.crc32(name.encode())


def evaluate_bundle(plan: ExperimentPlan, data_dir, bundle_dir, out_dir) -> list[dict]:
    """Per-dataset predictions, reliability and metrics for one bundle."""
    model, meta = load_model(bundle_dir)
    man = _data_manifest(plan, data_dir)
    if meta.get("config_hash") != man["config_hash"] or \
            meta.get("train_sha256") != man["datasets"]["train"]["sha256"]:
        raise IntegrityError(f"model bundle {bundle_dir} was trained on different data than {data_dir}")
    seed = meta["seed"]
    method = meta["method"]
    n_passes = meta["method_config"]["n_passes"]
    rows = []
    for name in dataset_names(plan):
        if name in ("train", "validation"):
            continue
        data = load_split(plan, data_dir, name)
        pred = predict(model, data.inputs(), n_passes, np.random.default_rng([seed, _dataset_stream(name)]))
        analytic_g, analytic_rel = propagate_dataset(data)
        dest = Path(out_dir) / name
        dest.mkdir(parents=True, exist_ok=True)
        _write_csv(dest / "predictions.csv", PRED_COLUMNS, zip(
            data.g_true, pred.g_hat, pred.sigma_al, pred.sigma_ep, pred.sigma_pr, data.nu,
            data.length_true, data.length_measured, analytic_g, analytic_rel))
        curve = reliability_curve(pred, data.g_true)
        _write_csv(dest / "reliability.csv", ["nominal", "empirical"], zip(curve.nominal, curve.empirical))
        comp = compare_uncertainty(pred, data)
        flag, stat = detect_constant_relative_uncertainty(comp)
        rmse, mae, mse = accuracy_metrics(pred.g_hat, data.g_true)
        metrics = {
            "n": len(data), "rmse": rmse, "mae": mae, "mean_signed_error": mse,
            "pearson_r": comp.pearson_r, "constant_stat": stat, "constant_flag": flag,
            "pred_sigma_rel_mean": float(np.mean(comp.predicted_sigma_rel)),
            "pred_sigma_rel_std": float(np.std(comp.predicted_sigma_rel)),
            "median_sigma_al": float(np.median(pred.sigma_al)),
            "median_sigma_ep": float(np.median(pred.sigma_ep)),
            "calib_max_abs_error": curve.max_abs_error,
            "calib_max_deficit": curve.max_deficit,
            "max_g_hat": float(np.max(pred.g_hat)),
        }
        if isinstance(model, ConcreteDropoutModel):
            for i, p in enumerate(model.dropout_probabilities()):
                metrics[f"dropout_p_{i}"] = p
        _write_csv(dest / "metrics.csv", ["metric", "value"], metrics.items())
        rows.extend({"method": method, "seed": seed, "dataset": name, "metric": k, "value": v}
                    for k, v in metrics.items())
    return rows


def _eval_job(plan_dict, data_dir, bundle_dir, out_dir):
    with threadpool_limits(1):
        return evaluate_bundle(ExperimentPlan.from_dict(plan_dict), data_dir, bundle_dir, out_dir)


def cmd_evaluate(plan: ExperimentPlan, data_dir, models_dir, out_dir, workers: int = 1) -> Path:
    data_dir, models_dir = Path(data_dir), Path(models_dir)
    _data_manifest(plan, data_dir)
    ev = Path(out_dir) / "eval"
    ev.mkdir(parents=True, exist_ok=True)
    jobs = []
    for m in plan.methods:
        for s in plan.seeds:
            b = models_dir / bundle_name(m, s)
            if not (b / "COMPLETE").exists():
                raise MissingArtifactError(f"missing artifact: model bundle {b}")
            jobs.append((plan.to_dict(), str(data_dir), str(b), str(ev / bundle_name(m, s))))
    rows = [r for chunk in _run_jobs(_eval_job, jobs, workers) for r in chunk]
    _write_csv(ev / "summary.csv", ["method", "seed", "dataset", "metric", "value"],
               ([r["method"], r["seed"], r["dataset"], r["metric"], r["value"]] for r in rows))
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r["method"], r["dataset"], r["metric"]), []).append(float(r["value"]))
    agg = []
    for (m, d, k), vals in groups.items():
        v = np.array(vals)
        agg.append([m, d, k, float(np.mean(v)), float(np.std(v, ddof=1)) if len(v) > 1 else 0.0, len(v)])
    _write_csv(ev / "aggregate.csv", ["method", "dataset", "metric", "mean", "stdev", "n_runs"], agg)
    plan.save(ev / "plan.json")
    _write_json(ev / "manifest.json", {
        "plan": plan.name, "plan_hash": plan.plan_hash(), "seeds": plan.seeds,
        "config_hash": plan.pendulum_config().config_hash(),
    })
    return ev


def cmd_report(out_dir, render: bool = False) -> Path:
    """Plot-ready tables for the noise-range scatter, the OOD sweep, and reliability panels."""
    out_dir = Path(out_dir)
    ev = out_dir / "eval"
    man = _read_json(ev / "manifest.json")
    if not (ev / "plan.json").exists():
        raise MissingArtifactError(f"missing artifact: {ev / 'plan.json'}")
    plan = ExperimentPlan.load(ev / "plan.json")
    figs = out_dir / "figures"
    figs.mkdir(parents=True, exist_ok=True)
    noise = f"{plan.noise_range[0]:g}-{plan.noise_range[1]:g}"

    fig1 = []
    for m in plan.methods:
        for s in plan.seeds:
            for r in _read_csv(ev / bundle_name(m, s) / "test" / "predictions.csv"):
                g_hat = float(r["g_hat"])
                fig1.append([float(r["analytic_sigma_rel"]), float(r["sigma_al"]) / g_hat, m, noise, s])
    _write_csv(figs / "fig1_noise.csv",
               ["analytic_sigma_rel", "predicted_sigma_rel", "method", "noise_range", "seed"], fig1)

    summary = _read_csv(ev / "summary.csv")
    med = {(r["method"], int(r["seed"]), r["dataset"]): float(r["value"])
           for r in summary if r["metric"] == "median_sigma_ep"}
    fig2 = []
    for m in plan.methods:
        for s in plan.seeds:
            fig2.append([m, s, "in_distribution", "test", 0, med[(m, s, "test")]])
            for spec in plan.ood_specs:
                fig2.append([m, s, spec.kind, spec.label, spec.target_range[0],
                             med[(m, s, f"ood_{spec.label}")]])
    _write_csv(figs / "fig2_ood.csv",
               ["method", "seed", "shift_kind", "shift_label", "range_lo", "median_sigma_ep"], fig2)

    panels = [("L_0.2-0.8", "test")] + [(s.label, f"ood_{s.label}") for s in plan.ood_specs
                                         if s.kind == "shift_l_keep_g"]
    fig3 = []
    for panel, dname in panels:
        for m in plan.methods:
            for s in plan.seeds:
                for r in _read_csv(ev / bundle_name(m, s) / dname / "reliability.csv"):
                    fig3.append([panel, m, s, float(r["nominal"]), float(r["empirical"])])
    _write_csv(figs / "fig3_calibration.csv", ["panel", "method", "seed", "nominal", "empirical"], fig3)
    _write_json(figs / "manifest.json", {
        "plan": man["plan"], "plan_hash": man["plan_hash"], "seeds": man["seeds"],
        "config_hash": man["config_hash"],
        "files": {
            "fig1_noise.csv": "per test point: analytic vs predicted (sigma_al/g_hat) relative uncertainty",
            "fig2_ood.csv": "median epistemic sigma per dataset along the OOD sweeps",
            "fig3_calibration.csv": "reliability curves per L-range panel",
        },
    })
    if render:
        from .plots import render_figures
        render_figures(figs)
    return figs


def cmd_run(plan: ExperimentPlan, out_dir, workers: int = 1, render: bool = False) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan.save(out / "plan.json")
    data = cmd_generate(plan, out)
    cmd_train(plan, data, out, workers)
    cmd_evaluate(plan, data, out / "models", out, workers)
    return cmd_report(out, render)
