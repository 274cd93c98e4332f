"""Synthetic UAV-SNR data, CSV ingestion, splitting and normalization."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .exceptions import DimensionMismatch, FormatError, ParseError
from .graphcore import (
    GraphKind,
    GraphSequence,
    GraphSnapshot,
    build_knn_graph,
    build_radius_graph,
    radius_weights,
)

__all__ = [
    "UavConfig",
    "DatasetBundle",
    "simulate_uav",
    "link_snr_db",
    "load_csv",
    "split_and_normalize",
    "save_bundle",
    "load_bundle",
    "BUNDLE_FORMAT",
]

BUNDLE_FORMAT = "gkae-bundle/1"


@dataclass
class UavConfig:
    n_nodes: int = 20
    area_side: float = 1.0
    radius: float = 0.5
    tx_power_dbm: float = 10.0
    pathloss_exponent: float = 2.0
    noise_floor_dbm: float = -90.0
    dt: float = 0.1
    speed_min: float = 0.01
    speed_max: float = 0.05
    min_distance: float = 0.01
    n_steps: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.speed_min > self.speed_max:
            raise ValueError("speed_min exceeds speed_max")
        if self.pathloss_exponent <= 0:
            raise ValueError("path-loss exponent must be positive")


@dataclass(eq=False)
class DatasetBundle:
    sequence: GraphSequence
    coords: np.ndarray  # T x N x d for moving nodes, N x d for static ones
    tau: int = 300
    mean: float = 0.0
    std: float = 1.0
    normalized: bool = False
    std_clamped: bool = False
    unit: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.tau < len(self.sequence):
            raise ValueError(f"split index {self.tau} must lie inside (0, {len(self.sequence)})")
        if self.std <= 0:
            raise ValueError("std must be positive")

    @property
    def signals(self) -> np.ndarray:
        return self.sequence.signals

    def denormalize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return X * self.std + self.mean if self.normalized else X

    def normalize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return (X - self.mean) / self.std if self.normalized else X

    def coords_at(self, t: int) -> np.ndarray:
        return self.coords[t] if self.coords.ndim == 3 else self.coords


def link_snr_db(distance, cfg: UavConfig):
    """Log-distance SNR in dB for a link of the given length."""
    d = np.maximum(distance, cfg.min_distance)
    return cfg.tx_power_dbm - 10.0 * cfg.pathloss_exponent * np.log10(d) - cfg.noise_floor_dbm


def simulate_uav(cfg: UavConfig = None) -> DatasetBundle:
    """Random-waypoint UAV swarm with radius connectivity and mean-SNR signals.

    Speeds are distance units per second; each step moves ``speed * dt``
    toward the current waypoint and a new waypoint and speed are drawn on
    arrival. A node with no neighbors keeps its previous signal (0 before
    its first link).
    """
    cfg = UavConfig() if cfg is None else cfg
    rng = np.random.default_rng(cfg.seed)
    n, side = cfg.n_nodes, cfg.area_side
    pos = rng.uniform(0.0, side, size=(n, 2))
    target = rng.uniform(0.0, side, size=(n, 2))
    speed = rng.uniform(cfg.speed_min, cfg.speed_max, size=n)

    coords = np.empty((cfg.n_steps, n, 2))
    snapshots = []
    prev = np.zeros(n)
    for t in range(cfg.n_steps):
        coords[t] = pos
        W = radius_weights(pos, cfg.radius)
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        snr = link_snr_db(dist, cfg)
        deg = W.sum(axis=1)
        sums = (snr * W).sum(axis=1)
        signal = np.where(deg > 0, sums / np.maximum(deg, 1), prev)
        snapshots.append(GraphSnapshot(signal, W))
        prev = signal

        step = speed * cfg.dt
        delta = target - pos
        remaining = np.sqrt(np.sum(delta * delta, axis=1))
        arrived = remaining <= step
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(remaining[:, None] > 0, delta / remaining[:, None], 0.0)
        pos = np.where(arrived[:, None], target, pos + unit * step[:, None])
        pos = np.abs(pos)
        pos = np.where(pos > side, 2 * side - pos, pos)  # reflect
        k = int(arrived.sum())
        if k:
            target[arrived] = rng.uniform(0.0, side, size=(k, 2))
            speed[arrived] = rng.uniform(cfg.speed_min, cfg.speed_max, size=k)

    seq = GraphSequence(snapshots, GraphKind.TYPE3, cfg.dt)
    # 300 of the default 500 steps; shorter runs keep the same 60 % share
    tau = max(1, min(300, int(0.6 * cfg.n_steps)))
    return DatasetBundle(seq, coords, tau=tau, unit="dB", meta={"uav": asdict(cfg)})


def _read_numeric_csv(path, what):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row and any(cell.strip() for cell in row):
                rows.append(row)
    if not rows:
        raise ParseError(f"{what} file {path} is empty")
    start = 0
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        start = 1  # header row
    width = len(rows[start]) if start < len(rows) else 0
    out = []
    for i in range(start, len(rows)):
        row = rows[i]
        if len(row) != width:
            raise ParseError(f"{what}: expected {width} columns, got {len(row)}", row=i + 1)
        vals = []
        for j, cell in enumerate(row):
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(f"{what}: cannot parse {cell!r} as a number", row=i + 1, col=j + 1) from None
        out.append(vals)
    if not out:
        raise ParseError(f"{what} file {path} has no data rows")
    return np.asarray(out, dtype=float)


def load_csv(signals_path, coords_path=None, graph_rule=None, tau=None, dt=1.0,
             unit="") -> DatasetBundle:
    """Load a Type-1 dataset: signals CSV (rows time, columns nodes) plus a static graph.

    ``graph_rule`` is one of ``{"knn": k}``, ``{"radius": r}`` or
    ``{"edges": [[l, m], ...]}`` (optionally with ``"weights"``).
    """
    graph_rule = {"knn": 4} if graph_rule is None else graph_rule
    S = _read_numeric_csv(signals_path, "signals")
    T, n = S.shape
    coords = None
    if coords_path is not None:
        coords = _read_numeric_csv(coords_path, "coords")
        if coords.shape[0] != n:
            raise DimensionMismatch(
                f"coords file has {coords.shape[0]} rows but signals have {n} nodes"
            )
    if "knn" in graph_rule:
        if coords is None:
            raise ValueError("a knn graph needs coordinates")
        W = build_knn_graph(coords, int(graph_rule["knn"])).weights
    elif "radius" in graph_rule:
        if coords is None:
            raise ValueError("a radius graph needs coordinates")
        W = build_radius_graph(coords, float(graph_rule["radius"])).weights
    elif "edges" in graph_rule:
        W = np.zeros((n, n))
        weights = graph_rule.get("weights") or [1.0] * len(graph_rule["edges"])
        for (l, m), w in zip(graph_rule["edges"], weights):
            W[l, m] = W[m, l] = float(w)
    else:
        raise ValueError(f"unknown graph rule {graph_rule!r}")
    seq = GraphSequence([GraphSnapshot(S[t], W) for t in range(T)], GraphKind.TYPE1, dt)
    if coords is None:
        coords = np.zeros((n, 0))
    if tau is None:
        tau = max(1, int(round(0.6 * T)))
    return DatasetBundle(seq, coords, tau=tau, unit=unit, meta={"graph_rule": graph_rule})


def split_and_normalize(bundle: DatasetBundle, tau: int = None) -> DatasetBundle:
    """Global z-score using statistics of columns ``t < tau`` only."""
    tau = bundle.tau if tau is None else tau
    X = bundle.denormalize(bundle.signals)
    if not 0 < tau < X.shape[1]:
        raise ValueError(f"split index {tau} must lie inside (0, {X.shape[1]})")
    train = X[:, :tau]
    mean = float(train.mean())
    std = float(train.std())
    clamped = False
    if not std > 0:
        warnings.warn("training signal has zero variance; std clamped to 1", RuntimeWarning)
        std, clamped = 1.0, True
    seq = bundle.sequence.with_signals((X - mean) / std)
    return replace(bundle, sequence=seq, tau=tau, mean=mean, std=std, normalized=True,
                   std_clamped=clamped)


def _bundle_payload(bundle: DatasetBundle) -> dict:
    seq = bundle.sequence
    edges = []
    for t, snap in enumerate(seq.snapshots):
        rows, cols = np.nonzero(np.triu(snap.weights, k=1))
        edges.append([[int(l), int(m), float(snap.weights[l, m])] for l, m in zip(rows, cols)])
    return {
        "format": BUNDLE_FORMAT,
        "kind": seq.kind.value,
        "dt": seq.dt,
        "n_nodes": seq.n_nodes,
        "signals": seq.signals.tolist(),
        "edges": edges,
        "coords_shape": list(bundle.coords.shape),
        "coords": bundle.coords.ravel().tolist(),
        "tau": bundle.tau,
        "mean": bundle.mean,
        "std": bundle.std,
        "normalized": bundle.normalized,
        "std_clamped": bundle.std_clamped,
        "unit": bundle.unit,
        "meta": bundle.meta,
    }


def save_bundle(bundle: DatasetBundle, path):
    with open(path, "w") as fh:
        json.dump(_bundle_payload(bundle), fh, sort_keys=True)


def load_bundle(path) -> DatasetBundle:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a JSON bundle ({exc})") from exc
    if payload.get("format") != BUNDLE_FORMAT:
        raise FormatError(
            f"{path}: expected format {BUNDLE_FORMAT!r}, got {payload.get('format')!r}"
        )
    n = payload["n_nodes"]
    X = np.asarray(payload["signals"], dtype=float).reshape(n, -1)
    snaps = []
    for t, edge_list in enumerate(payload["edges"]):
        W = np.zeros((n, n))
        for l, m, w in edge_list:
            W[l, m] = W[m, l] = w
        snaps.append(GraphSnapshot(X[:, t], W))
    seq = GraphSequence(snaps, GraphKind(payload["kind"]), payload["dt"])
    coords = np.asarray(payload["coords"], dtype=float).reshape(payload["coords_shape"])
    return DatasetBundle(
        seq,
        coords,
        tau=payload["tau"],
        mean=payload["mean"],
        std=payload["std"],
        normalized=payload["normalized"],
        std_clamped=payload["std_clamped"],
        unit=payload["unit"],
        meta=payload["meta"],
    )
