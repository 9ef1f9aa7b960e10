"""End-to-end pipelines: decompose-then-forecast, the speed benchmark and the ablation grid."""

from __future__ import annotations

import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .datasets import GraphDataset, GraphDatasetSpec, generate_graph_dataset, mixed_tone_signals
from .errors import ConfigError, InvalidInputError
from .forecaster import (ForecastConfig, ForecasterParams, horizon_metrics, make_windows, predict,
                         time_of_day_features, train_forecaster)
from .graph import build_laplacians
from .signal import TimeSeries
from .unfolded import UvmdParams, UvmdTrainConfig, decompose_with, uvmd_train
from .vmd import VmdConfig, reconstruction_error, vmd_decompose

FEATURES = ("modes", "raw")


def default_threads() -> int:
    return os.cpu_count() or 1


def cpu_model() -> str:
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine()


def parallel_map(fn, items, threads: int = 1) -> list:
    """Ordered map over a thread pool; ``threads=1`` runs inline."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def chunk_length(T: int, fraction: float) -> int:
    n = round(1.0 / fraction)
    if n < 1 or abs(n * fraction - 1.0) > 1e-9:
        raise ConfigError(f"must be 1/n for an integer n, got {fraction}", "window_fraction")
    L = T // n
    if L * n != T or L % 2 or L < 4:
        raise ConfigError(f"length {T} does not split into {n} even chunks of >= 4 samples", "window_fraction")
    return L


def chunk_signals(series, fraction: float) -> list[TimeSeries]:
    """Cut every series into ``1/fraction`` consecutive chunks, series-major order."""
    out = []
    for s in series:
        L = chunk_length(s.length, fraction)
        for j in range(s.length // L):
            out.append(TimeSeries(f"{s.id}#{j}", s.values[j * L:(j + 1) * L]))
    return out


def decompose_series(values, params: UvmdParams, threads: int = 1) -> np.ndarray:
    """Modes ``(N, K, T)`` of each row, decomposed chunk by chunk at the parameter length."""
    values = np.asarray(values, dtype=float)
    N, T = values.shape
    L = params.length
    if T % L:
        raise InvalidInputError(f"series length {T} is not a multiple of the parameter length {L}")
    jobs = [(i, j) for i in range(N) for j in range(T // L)]
    results = parallel_map(lambda ij: decompose_with(params, values[ij[0], ij[1] * L:(ij[1] + 1) * L]).modes,
                           jobs, threads)
    modes = np.zeros((N, params.K, T))
    for (i, j), m in zip(jobs, results):
        modes[i, :, j * L:(j + 1) * L] = m
    return modes


# ---------------------------------------------------------------- forecasting


@dataclass(frozen=True)
class PipelineConfig:
    """Two-stage pipeline: UVMD features (or the raw series) into the graph forecaster."""

    feature: str = "modes"
    uvmd: UvmdTrainConfig = UvmdTrainConfig(K=4)
    forecast: ForecastConfig = ForecastConfig()
    window_fraction: float = 1.0
    time_of_day_period: float = 0.0  # > 0 appends a sin/cos pair as auxiliary channels

    def __post_init__(self):
        if self.feature not in FEATURES:
            raise ConfigError(f"must be one of {FEATURES}, got {self.feature!r}", "feature")
        if self.time_of_day_period < 0:
            raise ConfigError(f"must be >= 0, got {self.time_of_day_period}", "time_of_day_period")


@dataclass
class PipelineResult:
    val_mae: float
    test: dict
    forecaster: ForecasterParams
    uvmd: UvmdParams | None
    uvmd_report: object | None
    history: object
    mean: np.ndarray
    std: np.ndarray

    def summary(self, include_timing: bool = True) -> dict:
        out = {"val_mae": self.val_mae, "test": self.test,
               "forecaster_parameters": self.forecaster.n_parameters(),
               "history": self.history.to_dict(include_timing)}
        if self.uvmd is not None:
            out["uvmd_parameters"] = int(self.uvmd.alpha_raw.size + 2 * self.uvmd.H.size)
            out["uvmd_report"] = self.uvmd_report.to_dict(include_timing)
        return out


def normalize_nodes(values, train_fraction: float):
    """Per-node z-score fitted on the first ``train_fraction`` of time steps."""
    values = np.asarray(values, dtype=float)
    fit = values[:, :max(2, int(train_fraction * values.shape[1]))]
    mean = fit.mean(axis=1)
    std = fit.std(axis=1)
    if np.any(std == 0):
        raise InvalidInputError(f"nodes {np.nonzero(std == 0)[0].tolist()} are constant on the fitting range")
    return (values - mean[:, None]) / std[:, None], mean, std


def build_features(normalized, cfg: PipelineConfig, params: UvmdParams | None, threads: int = 1):
    """``(N, K + d, T)`` features: modes (or the raw series) plus optional auxiliary channels."""
    if cfg.feature == "raw":
        feats = normalized[:, None, :]
    else:
        feats = decompose_series(normalized, params, threads)
    if cfg.time_of_day_period > 0:
        N, _, T = feats.shape
        aux = np.broadcast_to(time_of_day_features(T, cfg.time_of_day_period), (N, 2, T))
        feats = np.concatenate([feats, aux], axis=1)
    return feats


def forecast_pipeline(dataset: GraphDataset, cfg: PipelineConfig | None = None, threads: int = 1) -> PipelineResult:
    """Normalize, optionally decompose, window, then train and test the forecaster.

    The decomposition sees each whole chunk, as in any two-stage
    decompose-then-forecast pipeline, so mode features carry in-chunk context.
    """
    cfg = cfg or PipelineConfig()
    graph = build_laplacians(dataset.adjacency)
    values = dataset.values
    normalized, mean, std = normalize_nodes(values, cfg.forecast.split.train_frac)
    params = report = None
    if cfg.feature == "modes":
        L = chunk_length(values.shape[1], cfg.window_fraction)
        chunks = chunk_signals([TimeSeries(s.id, row) for s, row in zip(dataset.series, normalized)],
                               cfg.window_fraction)
        assert all(c.length == L for c in chunks)
        params, report = uvmd_train(chunks, cfg.uvmd)
        params.normalization = {"node_mean": mean.tolist(), "node_std": std.tolist()}
    features = build_features(normalized, cfg, params, threads)
    windows, targets, _ = make_windows(features, normalized, cfg.forecast.T_w, cfg.forecast.T_out)
    model, hist = train_forecaster(windows, targets, graph, cfg.forecast)
    _, _, te = cfg.forecast.split.bounds(len(windows))
    pred = predict(windows[te], graph, model)
    scale = std[None, :, None]
    shift = mean[None, :, None]
    test = horizon_metrics(pred * scale + shift, targets[te] * scale + shift)
    return PipelineResult(hist.best_val_loss, test, model, params, report, hist, mean, std)


def mode_vs_raw(spec: GraphDatasetSpec, uvmd: UvmdTrainConfig, forecast: ForecastConfig, threads: int = 1) -> dict:
    """Validation MAE of the same backbone fed with modes versus the raw series."""
    data = generate_graph_dataset(spec)
    out = {}
    for feature in FEATURES:
        res = forecast_pipeline(data, PipelineConfig(feature, uvmd, forecast), threads)
        out[feature] = res.val_mae
    return out


# ---------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class BenchConfig:
    lengths: tuple = (1024, 4096, 16384)
    modes: tuple = (3, 13)
    n_signals: int = 3
    repetitions: int = 5
    max_iter: int = 500
    train_signals: int = 20
    train_epochs: int = 30
    sweep_length: int = 4096
    sweep_K: int = 3
    sweep_iters: tuple = (25, 50, 100, 200, 400)
    seed: int = 0

    def __post_init__(self):
        if self.repetitions < 5:
            raise ConfigError(f"must be >= 5, got {self.repetitions}", "repetitions")
        for name in ("n_signals", "max_iter", "train_signals", "train_epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"must be >= 1, got {getattr(self, name)}", name)
        if not self.lengths or not self.modes:
            raise ConfigError("must not be empty", "lengths" if not self.lengths else "modes")
        if len(self.sweep_iters) < 3:
            raise ConfigError("needs at least 3 points for a linear fit", "sweep_iters")


def median_time(fn, repetitions: int) -> tuple[float, object]:
    """Median wall-clock ms of ``repetitions`` calls after one warm-up call."""
    result = fn()
    times = []
    for _ in range(repetitions):
        start = time.perf_counter()
        result = fn()
        times.append((time.perf_counter() - start) * 1e3)
    return float(np.median(times)), result


def bench_cell(T: int, K: int, cfg: BenchConfig, threads: int = 1, params: UvmdParams | None = None) -> dict:
    """Time both engines on the same held-out signals at one (T, K)."""
    signals = mixed_tone_signals(cfg.train_signals + cfg.n_signals, T, seed=cfg.seed + 7919 * K + T)
    train, test = signals[:cfg.train_signals], signals[cfg.train_signals:]
    if params is None:
        params, _ = uvmd_train(train, UvmdTrainConfig(K=K, depth=1, max_epochs=cfg.train_epochs, seed=cfg.seed))
    vcfg = VmdConfig(K=K, max_iter=cfg.max_iter)

    def run(sig):
        t_it, ms_it = median_time(lambda: vmd_decompose(sig, vcfg), cfg.repetitions)
        t_un, ms_un = median_time(lambda: decompose_with(params, sig), cfg.repetitions)
        return {"id": sig.id,
                "iterative": {"ms": t_it, "reconstruction_error": reconstruction_error(sig, ms_it),
                              "iterations": ms_it.iterations_used},
                "unfolded": {"ms": t_un, "reconstruction_error": reconstruction_error(sig, ms_un),
                             "mode_updates": ms_un.iterations_used * K}}

    per_signal = parallel_map(run, test, threads)
    totals = {e: float(sum(p[e]["ms"] for p in per_signal)) for e in ("iterative", "unfolded")}
    errors = {e: float(np.mean([p[e]["reconstruction_error"] for p in per_signal])) for e in ("iterative", "unfolded")}
    return {"T": T, "K": K, "per_signal": per_signal,
            "total_ms": totals, "mean_reconstruction_error": errors,
            "speedup": totals["iterative"] / totals["unfolded"]}


def iteration_scaling(cfg: BenchConfig) -> dict:
    """Iterative time against iterations actually run, with a least-squares line."""
    sig = mixed_tone_signals(1, cfg.sweep_length, seed=cfg.seed)[0]
    points = []
    for n in cfg.sweep_iters:
        vcfg = VmdConfig(K=cfg.sweep_K, max_iter=n, tol=0.0)
        ms, res = median_time(lambda: vmd_decompose(sig, vcfg), cfg.repetitions)
        points.append({"iterations": res.iterations_used, "ms": ms,
                       "reconstruction_error": reconstruction_error(sig, res)})
    x = np.array([p["iterations"] for p in points], dtype=float)
    y = np.array([p["ms"] for p in points])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return {"T": cfg.sweep_length, "K": cfg.sweep_K, "points": points,
            "slope_ms_per_iteration": float(slope), "intercept_ms": float(intercept), "r2": r2}


def run_bench(cfg: BenchConfig | None = None, threads: int = 1) -> dict:
    cfg = cfg or BenchConfig()
    cells = [bench_cell(T, K, cfg, threads) for T in cfg.lengths for K in cfg.modes]
    iterative = sum(c["total_ms"]["iterative"] for c in cells)
    unfolded = sum(c["total_ms"]["unfolded"] for c in cells)
    return {"config": _jsonable(asdict(cfg)), "cells": cells,
            "total_ms": {"iterative": iterative, "unfolded": unfolded},
            "speedup": iterative / unfolded,
            "iteration_scaling": iteration_scaling(cfg),
            "environment": {"cpu_model": cpu_model(), "threads": threads, "cpu_count": os.cpu_count()}}


# ---------------------------------------------------------------- ablation


CASE_III_K = (3, 6, 9, 13, 15)
CASE_III_DEPTH = (1, 2)
CASE_II_FRACTIONS = (1.0, 0.5, 0.25, 0.125)


@dataclass(frozen=True)
class AblateConfig:
    dataset: GraphDatasetSpec = GraphDatasetSpec(broadband=1.0)
    uvmd: UvmdTrainConfig = UvmdTrainConfig(K=13, max_epochs=30)
    forecast: ForecastConfig = ForecastConfig(max_epochs=20)
    cases: tuple = ("I", "II", "III")
    case_iii_K: tuple = CASE_III_K
    case_iii_depth: tuple = CASE_III_DEPTH
    fractions: tuple = CASE_II_FRACTIONS

    def __post_init__(self):
        bad = set(self.cases) - {"I", "II", "III"}
        if bad:
            raise ConfigError(f"unknown cases {sorted(bad)}", "cases")


def ablation_cells(cfg: AblateConfig) -> list[dict]:
    """The requested grid as (case, variant, K, depth, window fraction, alpha mode) rows."""
    K0, d0 = cfg.uvmd.K, cfg.uvmd.depth
    cells = []
    if "I" in cfg.cases:
        cells.append(dict(case="I", variant="shared alpha", K=K0, depth=d0, window_fraction=1.0, alpha_mode="shared"))
        cells.append(dict(case="I", variant="mode-specific alpha", K=K0, depth=d0, window_fraction=1.0,
                          alpha_mode="mode-specific"))
    if "II" in cfg.cases:
        for f in cfg.fractions:
            label = "full signal" if f == 1.0 else f"1/{round(1 / f)} signal"
            cells.append(dict(case="II", variant=label, K=K0, depth=d0, window_fraction=f, alpha_mode="mode-specific"))
    if "III" in cfg.cases:
        for K in cfg.case_iii_K:
            for d in cfg.case_iii_depth:
                cells.append(dict(case="III", variant=f"K={K} depth={d}", K=K, depth=d, window_fraction=1.0,
                                  alpha_mode="mode-specific"))
    return cells


ABLATE_COLUMNS = ["case", "variant", "K", "depth", "window_fraction", "alpha_mode", "uvmd_parameters",
                  "val_lrec_relative", "val_mae"] + [f"{m}_{h}" for h in ("3", "6", "12", "average")
                                                     for m in ("MAE", "RMSE", "MAPE")]


def run_ablation(cfg: AblateConfig | None = None, threads: int = 1) -> list[dict]:
    cfg = cfg or AblateConfig()
    data = generate_graph_dataset(cfg.dataset)
    rows = []
    for cell in ablation_cells(cfg):
        ucfg = replace(cfg.uvmd, K=cell["K"], depth=cell["depth"], shared_alpha=cell["alpha_mode"] == "shared")
        res = forecast_pipeline(data, PipelineConfig("modes", ucfg, cfg.forecast, cell["window_fraction"]), threads)
        row = dict(cell)
        row["uvmd_parameters"] = res.summary(False)["uvmd_parameters"]
        row["val_lrec_relative"] = res.uvmd_report.best_val_relative
        row["val_mae"] = res.val_mae
        for h in ("3", "6", "12", "average"):
            for m in ("MAE", "RMSE", "MAPE"):
                row[f"{m}_{h}"] = res.test[h][m]
        rows.append(row)
    return rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
