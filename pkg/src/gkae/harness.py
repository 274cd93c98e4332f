"""Experiment configuration, task pipelines, sweeps and plot-ready CSV output.

A run produces ``report.json`` (deterministic for a given config and seed),
``timing.json`` (wall-clock seconds, kept apart so reports stay
reproducible) and CSV tables:

``loss.csv``
    seed, stage, epoch, loss
``trajectory_node<i>.csv``
    seed, step, truth, gkae, persistence  (forecast window, original units)
``mse_time.csv``
    seed, method, t, mse  (per-step squared error, normalized units)
``sweep.csv``
    axis, value, method, metric, mean, std, n_seeds
``reconstruction.csv``
    seed, t, node, observed_flag, truth, estimate  (reconstruct task, first seed)
"""

from __future__ import annotations

import copy
import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import baselines, datasets, koopman, lcrecon
from .estimators import (
    GcnImputer,
    GraphKoopmanForecaster,
    LatentConsistencyImputer,
    NearestNeighborImputer,
    SmoothnessImputer,
)
from .exceptions import GkaeError
from .metrics import epsilon_recon, mae_pred, per_step_mse, rmse_pred

__all__ = [
    "CONFIG_FORMAT",
    "REPORT_FORMAT",
    "TASKS",
    "ExperimentConfig",
    "ExperimentResult",
    "StageError",
    "apply_overrides",
    "run_experiment",
    "write_report",
    "emit_plot_csv",
    "rmse_pred",
    "mae_pred",
    "epsilon_recon",
]

CONFIG_FORMAT = "gkae-config/1"
REPORT_FORMAT = "gkae-report/1"
TASKS = ("simulate", "train", "predict", "reconstruct", "baseline", "eval")
RECON_METHODS = ("gkae_lc", "nni", "gcn", "tgs", "tgss")
FORECAST_METHODS = ("gkae", "persistence", "gcn")


class StageError(GkaeError):
    """A component failed; the message names the task stage and seed."""


@dataclass
class ExperimentConfig:
    """Everything a run needs. Stored as JSON with ``format`` = ``gkae-config/1``.

    ``dataset`` selects the data source:
    ``{"source": "uav", ...UavConfig fields}``,
    ``{"source": "csv", "signals": path, "coords": path, "graph_rule": {...},
    "tau": int, "dt": float, "unit": str}`` or ``{"source": "bundle", "path": path}``.
    ``model``, ``train`` and ``lc`` hold GkaeConfig, TrainConfig and LcConfig
    fields (``n_nodes`` and seeds are filled in per run). ``sweep`` maps
    ``masking_rate``, ``koopman_dim`` or ``n_nodes`` to value lists; the
    ``eval`` task runs every axis present.
    """

    task: str = "predict"
    dataset: dict = field(default_factory=lambda: {"source": "uav"})
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    lc: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    horizon: int = 20
    masking_rate: float = 0.5
    always_masked: list = field(default_factory=list)
    recon_methods: list = field(default_factory=lambda: list(RECON_METHODS))
    forecast_methods: list = field(default_factory=lambda: list(FORECAST_METHODS))
    gcn_epochs: int = 500
    sweep: dict = field(default_factory=dict)
    plot_nodes: list = field(default_factory=lambda: [0])
    model_path: str = None
    out_dir: str = "results"
    format: str = CONFIG_FORMAT

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.format != CONFIG_FORMAT:
            raise ValueError(f"config format {self.format!r}, expected {CONFIG_FORMAT!r}")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not 0 <= self.masking_rate < 1:
            raise ValueError("masking_rate must lie in [0, 1)")
        unknown = set(self.recon_methods) - set(RECON_METHODS)
        unknown |= set(self.forecast_methods) - set(FORECAST_METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        bad_axes = set(self.sweep) - {"masking_rate", "koopman_dim", "n_nodes"}
        if bad_axes:
            raise ValueError(f"unknown sweep axes {sorted(bad_axes)}")
        source = self.dataset.get("source", "uav")
        paths = []
        if source == "csv":
            paths = [self.dataset.get("signals"), self.dataset.get("coords")]
            if self.dataset.get("signals") is None:
                raise ValueError("csv dataset needs a signals path")
        elif source == "bundle":
            paths = [self.dataset.get("path")]
        elif source != "uav":
            raise ValueError(f"unknown dataset source {source!r}")
        paths.append(self.model_path)
        for p in paths:
            if p is not None and not os.path.exists(p):
                raise FileNotFoundError(p)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        data.setdefault("format", CONFIG_FORMAT)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key=value`` strings; dotted keys reach into nested dicts, values parse as JSON."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        node = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {key!r} descends into a non-mapping")
        node[parts[-1]] = _parse_value(value)
    return data


@dataclass
class ExperimentResult:
    report: dict
    tables: dict  # file name -> (header, rows)
    timing: dict
    artifacts: dict = field(default_factory=dict)  # file name -> JSON-ready payload


# data and models


def _build_dataset(cfg: ExperimentConfig, seed: int, n_nodes=None) -> datasets.DatasetBundle:
    spec = dict(cfg.dataset)
    source = spec.pop("source", "uav")
    if source == "uav":
        if n_nodes is not None:
            spec["n_nodes"] = n_nodes
        spec.pop("seed", None)
        bundle = datasets.simulate_uav(datasets.UavConfig(**spec, seed=seed))
    elif source == "csv":
        bundle = datasets.load_csv(
            spec["signals"],
            spec.get("coords"),
            graph_rule=spec.get("graph_rule"),
            tau=spec.get("tau"),
            dt=spec.get("dt", 1.0),
            unit=spec.get("unit", ""),
        )
    else:
        bundle = datasets.load_bundle(spec["path"])
    return bundle if bundle.normalized else datasets.split_and_normalize(bundle)


def _forecaster(cfg: ExperimentConfig, seed: int, **model_overrides) -> GraphKoopmanForecaster:
    params = {**cfg.model, **cfg.train, **model_overrides}
    params.pop("seed", None)
    params.pop("n_nodes", None)
    return GraphKoopmanForecaster(random_state=seed, **params)


def _trained(cfg, bundle, seed, tables, **model_overrides) -> GraphKoopmanForecaster:
    if cfg.model_path is not None and not model_overrides:
        model, _, _ = koopman.load_model(cfg.model_path)
        if model.n_nodes != bundle.sequence.n_nodes:
            raise StageError(f"model expects {model.n_nodes} nodes, data has {bundle.sequence.n_nodes}")
        return GraphKoopmanForecaster.from_model(model)
    est = _forecaster(cfg, seed, **model_overrides).fit(bundle.sequence[: bundle.tau])
    rows = tables.setdefault("loss.csv", (["seed", "stage", "epoch", "loss"], []))[1]
    stage = "gkae" if not model_overrides else "gkae_" + "_".join(
        f"{k}{v}" for k, v in sorted(model_overrides.items()))
    rows.extend([seed, stage, e, v] for e, v in enumerate(est.loss_history_))
    return est


def _normalization(bundle):
    return {"mean": bundle.mean, "std": bundle.std, "unit": bundle.unit}


# per-seed pipelines


def _forecast(cfg, bundle, est, seed, tables) -> dict:
    tau, P = bundle.tau, cfg.horizon
    X = bundle.signals
    if tau + P > X.shape[1]:
        raise StageError(f"horizon {P} runs past the end of the data (tau={tau}, T={X.shape[1]})")
    truth = X[:, tau: tau + P]
    prefix = bundle.sequence[:tau]
    preds = {}
    for method in cfg.forecast_methods:
        if method == "gkae":
            preds[method] = est.predict(prefix, P)
        elif method == "persistence":
            preds[method] = baselines.persistence_forecast(X[:, :tau], P)
        elif method == "gcn":
            preds[method] = baselines.gcnae_forecast(prefix, P, epochs=cfg.gcn_epochs, seed=seed)
    metrics = {}
    for method, pred in preds.items():
        metrics[f"{method}.rmse_normalized"] = rmse_pred(truth, pred)
        metrics[f"{method}.mae_normalized"] = mae_pred(truth, pred)
        metrics[f"{method}.rmse"] = rmse_pred(bundle.denormalize(truth), bundle.denormalize(pred))
        metrics[f"{method}.mae"] = mae_pred(bundle.denormalize(truth), bundle.denormalize(pred))
        mse = per_step_mse(truth, pred)
        rows = tables.setdefault("mse_time.csv", (["seed", "method", "t", "mse"], []))[1]
        rows.extend([seed, method, tau + p, v] for p, v in enumerate(mse))
    for node in cfg.plot_nodes:
        header = ["seed", "step", "truth", *preds]
        rows = tables.setdefault(f"trajectory_node{node}.csv", (header, []))[1]
        for p in range(P):
            rows.append([seed, tau + p, bundle.denormalize(truth[node, p]),
                         *(bundle.denormalize(preds[m][node, p]) for m in preds)])
    return metrics


def _reconstruct(cfg, bundle, est, seed, rate, methods, tables=None, keep_estimates=False):
    seq, tau = bundle.sequence, bundle.tau
    mask = lcrecon.make_mask(seq.n_nodes, len(seq), tau, rate, seed, cfg.always_masked)
    X = bundle.signals
    estimates = {}
    for method in methods:
        if method == "gkae_lc":
            imputer = LatentConsistencyImputer(est, random_state=seed, **cfg.lc)
        elif method == "nni":
            imputer = NearestNeighborImputer(coords=bundle.coords)
        elif method == "gcn":
            imputer = GcnImputer(epochs=cfg.gcn_epochs, random_state=seed)
        else:
            imputer = SmoothnessImputer(method=method)
        estimates[method] = imputer.fit_transform(seq, mask)
        if method == "gkae_lc" and tables is not None:
            rows = tables.setdefault("loss.csv", (["seed", "stage", "epoch", "loss"], []))[1]
            rows.extend([seed, f"lc_rate{rate}", e, v]
                        for e, v in enumerate(imputer.loss_history_))
    metrics = {}
    for method, Xh in estimates.items():
        if mask.hidden[:, tau:].any():  # small N can round the quota down to zero
            metrics[f"{method}.eps_recon"] = epsilon_recon(X, Xh, mask, tau)
        metrics[f"{method}.eps_recon_observed"] = epsilon_recon(X, Xh, mask, tau, "observed")
        if tables is not None:
            mse = per_step_mse(X[:, tau:], Xh[:, tau:], mask.J[:, tau:])
            rows = tables.setdefault("mse_time.csv", (["seed", "method", "t", "mse"], []))[1]
            rows.extend([seed, method, tau + i, v] for i, v in enumerate(mse))
    if cfg.always_masked and "gkae_lc" in estimates:
        metrics.update(_fully_masked_stats(X, estimates["gkae_lc"], mask, cfg.always_masked))
    return (metrics, mask, estimates) if keep_estimates else metrics


def _fully_masked_stats(X, Xh, mask, always) -> dict:
    tau = mask.tau
    err = (X[:, tau:] - Xh[:, tau:]) ** 2
    hidden = mask.J[:, tau:] == 0
    full = np.zeros(X.shape[0], dtype=bool)
    full[list(always)] = True
    partial = hidden & ~full[:, None]
    out = {"gkae_lc.fully_masked_mse": float(err[full].mean())}
    if partial.any():
        out["gkae_lc.partial_masked_mse"] = float(err[partial].mean())
    return out


def _recon_rows(bundle, mask, estimate, seed):
    X = bundle.signals
    tau = bundle.tau
    rows = []
    for t in range(tau, X.shape[1]):
        for n in range(X.shape[0]):
            rows.append([seed, t, n, int(mask.J[n, t]), bundle.denormalize(X[n, t]),
                         bundle.denormalize(estimate[n, t])])
    return rows


# tasks


def _task_simulate(cfg, seed, tables, artifacts):
    bundle = _build_dataset(cfg, seed)
    name = "bundle.json" if len(cfg.seeds) == 1 else f"bundle_seed{seed}.json"
    artifacts[name] = ("bundle", bundle)
    X = bundle.signals
    return {
        "n_nodes": bundle.sequence.n_nodes,
        "n_steps": len(bundle.sequence),
        "tau": bundle.tau,
        "raw_mean": bundle.mean,
        "raw_std": bundle.std,
        "normalized_test_std": float(X[:, bundle.tau:].std()),
    }


def _task_train(cfg, seed, tables, artifacts):
    bundle = _build_dataset(cfg, seed)
    est = _trained(cfg, bundle, seed, tables)
    name = "model.json" if len(cfg.seeds) == 1 else f"model_seed{seed}.json"
    artifacts[name] = ("model", est.model_, _normalization(bundle))
    G = est.transform(bundle.sequence[: bundle.tau])
    return {
        "final_loss": est.loss_history_[-1] if est.loss_history_ else float("nan"),
        "n_parameters": est.model_.n_parameters(),
        "koopman_spectral_radius": float(np.abs(est.koopman_eigenvalues()).max()),
        "embedding_variance": float(G.var(axis=0).sum()),
    }


def _task_predict(cfg, seed, tables, artifacts):
    bundle = _build_dataset(cfg, seed)
    est = _trained(cfg, bundle, seed, tables)
    metrics = _forecast(cfg, bundle, est, seed, tables)
    G = est.transform(bundle.sequence[: bundle.tau])
    metrics["embedding_variance"] = float(G.var(axis=0).sum())
    return metrics


def _task_reconstruct(cfg, seed, tables, artifacts):
    bundle = _build_dataset(cfg, seed)
    est = _trained(cfg, bundle, seed, tables)
    metrics, mask, estimates = _reconstruct(cfg, bundle, est, seed, cfg.masking_rate,
                                            ["gkae_lc"], tables, keep_estimates=True)
    if seed == cfg.seeds[0]:
        header = ["seed", "t", "node", "observed_flag", "truth", "estimate"]
        tables["reconstruction.csv"] = (header, _recon_rows(bundle, mask, estimates["gkae_lc"], seed))
    return metrics


def _task_baseline(cfg, seed, tables, artifacts):
    bundle = _build_dataset(cfg, seed)
    methods = [m for m in cfg.recon_methods if m != "gkae_lc"]
    metrics = _reconstruct(cfg, bundle, None, seed, cfg.masking_rate, methods, tables)
    fc = copy.copy(cfg)
    fc.forecast_methods = [m for m in cfg.forecast_methods if m != "gkae"]
    if fc.forecast_methods:
        metrics.update(_forecast(fc, bundle, None, seed, tables))
    return metrics


def _task_eval(cfg, seed, tables, artifacts):
    """Every sweep axis in the config; without sweeps, forecast plus reconstruction."""
    metrics = {}
    sweep_rows = tables.setdefault("_sweep_raw", ([], []))[1]
    bundle = est = None
    if not cfg.sweep or "masking_rate" in cfg.sweep or "koopman_dim" in cfg.sweep:
        bundle = _build_dataset(cfg, seed)
    if not cfg.sweep or "masking_rate" in cfg.sweep:
        est = _trained(cfg, bundle, seed, tables)
    if not cfg.sweep:
        metrics.update(_forecast(cfg, bundle, est, seed, tables))
        metrics.update(_reconstruct(cfg, bundle, est, seed, cfg.masking_rate,
                                    cfg.recon_methods, tables))
        return metrics
    for rate in cfg.sweep.get("masking_rate", []):
        m = _reconstruct(cfg, bundle, est, seed, rate, cfg.recon_methods)
        for key, value in m.items():
            method, metric = key.split(".", 1)
            sweep_rows.append(("masking_rate", rate, method, metric, value))
    for M in cfg.sweep.get("koopman_dim", []):
        e = _trained(cfg, bundle, seed, tables, koopman_dim=M)
        sweep_rows.append(("koopman_dim", M, "gkae", "final_loss", e.loss_history_[-1]))
    for n in cfg.sweep.get("n_nodes", []):
        b = _build_dataset(cfg, seed, n_nodes=n)
        e = _trained(cfg, b, seed, {})
        for key, value in _forecast(cfg, b, e, seed, {}).items():
            method, metric = key.split(".", 1)
            sweep_rows.append(("n_nodes", n, method, metric, value))
        m = _reconstruct(cfg, b, e, seed, cfg.masking_rate, cfg.recon_methods)
        for key, value in m.items():
            method, metric = key.split(".", 1)
            sweep_rows.append(("n_nodes", n, method, metric, value))
    return metrics


_TASKS = {
    "simulate": _task_simulate,
    "train": _task_train,
    "predict": _task_predict,
    "reconstruct": _task_reconstruct,
    "baseline": _task_baseline,
    "eval": _task_eval,
}


def _aggregate(runs) -> dict:
    keys = sorted({k for r in runs for k in r["metrics"]})
    out = {}
    for k in keys:
        vals = np.array([r["metrics"][k] for r in runs if k in r["metrics"]], dtype=float)
        out[k] = {"mean": float(vals.mean()), "std": float(vals.std()), "n_seeds": int(vals.size)}
    return out


def _sweep_table(raw_rows):
    groups = {}
    for axis, value, method, metric, v in raw_rows:
        groups.setdefault((axis, value, method, metric), []).append(v)
    rows = []
    for (axis, value, method, metric), vals in groups.items():
        vals = np.asarray(vals, dtype=float)
        rows.append([axis, value, method, metric, float(vals.mean()), float(vals.std()), vals.size])
    return ["axis", "value", "method", "metric", "mean", "std", "n_seeds"], rows


def _check_metrics(metrics, stage):
    for k, v in metrics.items():
        if isinstance(v, float) and (not np.isfinite(v) or (v < 0 and "loss" not in k)):
            raise StageError(f"{stage}: metric {k} = {v} is not a finite non-negative number")


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run ``cfg.task`` for every seed; nothing is written to disk here."""
    cfg.validate()
    task = _TASKS[cfg.task]
    tables, artifacts, runs, timing = {}, {}, [], {}
    start = time.perf_counter()
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        try:
            metrics = task(cfg, int(seed), tables, artifacts)
        except GkaeError as exc:
            raise StageError(f"task {cfg.task}, seed {seed}: {exc}") from exc
        _check_metrics(metrics, f"task {cfg.task}, seed {seed}")
        runs.append({"seed": int(seed), "metrics": metrics})
        timing[f"seed_{seed}"] = time.perf_counter() - t0
    timing["total_seconds"] = time.perf_counter() - start
    raw = tables.pop("_sweep_raw", None)
    if raw is not None and raw[1]:
        tables["sweep.csv"] = _sweep_table(raw[1])
    report = {
        "format": REPORT_FORMAT,
        "task": cfg.task,
        "config": cfg.to_dict(),
        "unit": _unit(cfg),
        "runs": runs,
        "aggregate": _aggregate(runs),
    }
    if "sweep.csv" in tables:
        header, rows = tables["sweep.csv"]
        report["sweep"] = [dict(zip(header, r)) for r in rows]
    return ExperimentResult(report, tables, timing, artifacts)


def _unit(cfg):
    source = cfg.dataset.get("source", "uav")
    if source == "uav":
        return "dB"
    if source == "csv":
        return cfg.dataset.get("unit", "")
    return datasets.load_bundle(cfg.dataset["path"]).unit


def write_report(result: ExperimentResult, out_dir) -> dict:
    """Write report.json, timing.json, model/bundle files and the CSV tables. Returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(result.report, fh, indent=2, sort_keys=True)
    paths["report.json"] = path
    path = os.path.join(out_dir, "timing.json")
    with open(path, "w") as fh:
        json.dump(result.timing, fh, indent=2, sort_keys=True)
    paths["timing.json"] = path
    for name, payload in result.artifacts.items():
        path = os.path.join(out_dir, name)
        if payload[0] == "bundle":
            datasets.save_bundle(payload[1], path)
        else:
            koopman.save_model(payload[1], path, normalization=payload[2])
        paths[name] = path
    paths.update(emit_plot_csv(result, out_dir))
    return paths


def emit_plot_csv(result: ExperimentResult, out_dir) -> dict:
    """Write each table as CSV; floats use ``repr`` so values round-trip exactly."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, (header, rows) in sorted(result.tables.items()):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                                 for v in row])
        paths[name] = path
    return paths
