"""``modegraph`` command-line interface.

Every command reads an optional JSON config (``--config``), applies flag
overrides, validates everything, checks that no output would be overwritten
without ``--force`` and only then starts work. Exit codes: 0 success, 2
configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .datasets import GraphDataset, GraphDatasetSpec, generate_graph_dataset, mixed_tone_signals
from .errors import ConfigError, InvalidInputError, ModegraphError, NumericFailure, TrainingFailure
from .forecaster import ForecastConfig, ForecasterParams, horizon_metrics, make_windows, predict
from .graph import build_laplacians, read_edge_list
from .signal import SplitConfig, SyntheticSpec, TimeSeries, gen_synthetic, load_csv, write_csv
from .unfolded import UvmdParams, UvmdTrainConfig, decompose_with, uvmd_train
from .vmd import VmdConfig, reconstruction_error, vmd_decompose

SCHEMA = 1
logger = logging.getLogger("modegraph")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


# ---------------------------------------------------------------- config plumbing


def build(cls, data, path: str):
    """Instantiate dataclass ``cls`` from a JSON object, reporting errors by field path."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object, got {type(data).__name__}", path)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown field (expected one of {sorted(fields)})", f"{path}.{key}")
        default = fields[key].default
        if isinstance(default, SplitConfig):
            value = _split(value, f"{path}.{key}")
        elif isinstance(default, tuple) and isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        elif isinstance(default, bool) and not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", f"{path}.{key}")
        elif isinstance(default, (int, float)) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"expected a number, got {value!r}", f"{path}.{key}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        if exc.field:
            raise ConfigError(str(exc)[len(exc.field) + 2:], f"{path}.{exc.field}") from None
        raise ConfigError(str(exc), path) from None
    except InvalidInputError as exc:
        raise ConfigError(str(exc), path) from None
    except TypeError as exc:
        raise ConfigError(str(exc), path) from None


def _split(value, path) -> SplitConfig:
    if isinstance(value, dict):
        return build(SplitConfig, value, path)
    if isinstance(value, list) and len(value) == 3:
        return build(SplitConfig, dict(zip(("train_frac", "val_frac", "test_frac"), value)), path)
    raise ConfigError(f"expected [train, val, test] fractions, got {value!r}", path)


def _seeded(section: dict | None, seed: int | None) -> dict:
    section = dict(section or {})
    if seed is not None:
        section["seed"] = seed
    return section


class Outputs:
    """Resolves output paths and refuses to clobber existing files without ``force``."""

    def __init__(self, out_dir, force: bool):
        self.dir = Path(out_dir)
        self.force = force

    def claim(self, *names) -> list[Path]:
        paths = [self.dir / n for n in names]
        existing = [str(p) for p in paths if p.exists()]
        if existing and not self.force:
            raise ConfigError(f"refusing to overwrite {existing}; pass --force", "out")
        self.dir.mkdir(parents=True, exist_ok=True)
        return paths


def write_json(path: Path, payload: dict) -> None:
    payload = {"schema": SCHEMA, **ex._jsonable(payload)}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _input_path(value, key: str) -> Path:
    if not isinstance(value, str):
        raise ConfigError(f"expected a path string, got {value!r}", key)
    return Path(value)


def _load_signals(cfg: dict, seed: int | None) -> list[TimeSeries]:
    """Signals from ``input`` (CSV), ``synthetic`` (tone specs) or ``mixed`` (random tones)."""
    sources = [k for k in ("input", "synthetic", "mixed") if k in cfg]
    if len(sources) != 1:
        raise ConfigError("exactly one of input, synthetic, mixed is required", "signals")
    if "input" in cfg:
        path = _input_path(cfg["input"], "input")
        if not path.exists():
            raise InvalidInputError(f"input file not found: {path}")
        return load_csv(path, cfg.get("columns"))
    if "synthetic" in cfg:
        items = cfg["synthetic"]
        if not isinstance(items, list) or not items:
            raise ConfigError("expected a non-empty list of tone specs", "synthetic")
        out = []
        for i, item in enumerate(items):
            spec = build(SyntheticSpec, {**item, "tones": [tuple(t) for t in item.get("tones", [])]},
                         f"synthetic[{i}]")
            out.append(gen_synthetic(spec, id=f"synthetic_{i}"))
        return out
    mixed = dict(cfg["mixed"])
    try:
        n, length = int(mixed.pop("n")), int(mixed.pop("length"))
    except (KeyError, TypeError, ValueError):
        raise ConfigError("needs integer n and length", "mixed") from None
    s = mixed.pop("seed", 0) if seed is None else seed
    if mixed:
        raise ConfigError(f"unknown fields {sorted(mixed)}", "mixed")
    return mixed_tone_signals(n, length, seed=s)


def _load_dataset(cfg: dict, seed: int | None) -> tuple[GraphDataset, dict]:
    """A graph dataset from a ``gen`` output directory or generated from a spec."""
    if "dataset_dir" in cfg:
        d = _input_path(cfg["dataset_dir"], "dataset_dir")
        series_path, edges_path = d / "series.csv", d / "edges.csv"
        for p in (series_path, edges_path):
            if not p.exists():
                raise InvalidInputError(f"dataset file not found: {p}")
        series = load_csv(series_path)
        A = read_edge_list(edges_path, n_nodes=len(series), node_ids=[s.id for s in series])
        return GraphDataset(series, A), {"dataset_dir": str(d)}
    spec = build(GraphDatasetSpec, _seeded(cfg.get("dataset"), seed), "dataset")
    return generate_graph_dataset(spec), {"dataset": spec.to_dict()}


# ---------------------------------------------------------------- commands


def cmd_gen(cfg: dict, args) -> dict:
    spec = build(GraphDatasetSpec, _seeded(cfg.get("dataset"), args.seed), "dataset")
    series_p, edges_p, meta_p = Outputs(args.out, args.force).claim("series.csv", "edges.csv", "metadata.json")
    data = generate_graph_dataset(spec)
    write_csv(series_p, data.series)
    ids = [s.id for s in data.series]
    with edges_p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src", "dst", "weight"])
        for i, j in zip(*np.nonzero(data.adjacency)):
            w.writerow([ids[i], ids[j], repr(float(data.adjacency[i, j]))])
    n = spec.n_nodes
    pairs = n * (n - 1) / 2
    write_json(meta_p, {"kind": "graph-dataset", "spec": spec.to_dict(), "nodes": ids,
                        "edge_density": float(np.count_nonzero(np.triu(data.adjacency, 1)) / pairs) if pairs else 0.0,
                        "tones": {i: [{"frequency": f, "amplitude": a, "phase": p} for f, a, p in t]
                                  for i, t in zip(ids, data.tones)}})
    return {"files": [str(series_p), str(edges_p), str(meta_p)]}


def cmd_decompose(cfg: dict, args) -> dict:
    engine = cfg.get("engine", "iterative")
    if engine not in ("iterative", "unfolded"):
        raise ConfigError(f"must be 'iterative' or 'unfolded', got {engine!r}", "engine")
    vcfg = params = None
    if engine == "iterative":
        vcfg = build(VmdConfig, cfg.get("vmd"), "vmd")
    else:
        if "params" not in cfg:
            raise ConfigError("the unfolded engine needs a trained parameter file; run `modegraph train-uvmd` first",
                              "params")
        path = _input_path(cfg["params"], "params")
        if not path.exists():
            raise InvalidInputError(f"parameter file not found: {path}; run `modegraph train-uvmd` first")
        params = UvmdParams.load(path)
    signals = _load_signals(cfg, args.seed)
    if params is not None:
        for s in signals:
            params.check_length(s.length)
    names = [f"modes_{s.id}.csv" for s in signals] + ["diagnostics.json"]
    paths = Outputs(args.out, args.force).claim(*names)

    def run(sig):
        result = vmd_decompose(sig, vcfg) if engine == "iterative" else decompose_with(params, sig)
        return sig, result

    diagnostics = []
    for (sig, res), path in zip(ex.parallel_map(run, signals, args.threads), paths):
        K = res.modes.shape[0]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"mode_{k + 1}" for k in range(K)])
            for t in range(sig.length):
                w.writerow([t] + [repr(float(v)) for v in res.modes[:, t]])
        diagnostics.append({"id": sig.id, "length": sig.length, "truncated": sig.truncated,
                            "omegas": res.omegas, "iterations": res.iterations_used, "converged": res.converged,
                            "reconstruction_error": reconstruction_error(sig, res)})
    extra = {"config": dataclasses.asdict(vcfg)} if vcfg else {"params_checksum": params.checksum(),
                                                               "K": params.K, "depth": params.depth}
    write_json(paths[-1], {"kind": "decomposition", "engine": engine, **extra, "signals": diagnostics})
    return {"files": [str(p) for p in paths]}


def cmd_train_uvmd(cfg: dict, args) -> dict:
    tcfg = build(UvmdTrainConfig, _seeded(cfg.get("uvmd"), args.seed), "uvmd")
    signals = _load_signals(cfg, args.seed)
    params_p, report_p = Outputs(args.out, args.force).claim("uvmd_params.json", "train_report.json")
    params, report = uvmd_train(signals, tcfg)
    params.save(params_p)
    write_json(report_p, {"kind": "uvmd-train-report", "config": dataclasses.asdict(tcfg),
                          "n_signals": len(signals), "length": params.length, "params_checksum": params.checksum(),
                          "best_val_relative": report.best_val_relative, **report.to_dict()})
    return {"files": [str(params_p), str(report_p)], "best_val_relative": report.best_val_relative}


def _pipeline_config(cfg: dict, seed: int | None) -> ex.PipelineConfig:
    uvmd = build(UvmdTrainConfig, _seeded({"K": 4, **(cfg.get("uvmd") or {})}, seed), "uvmd")
    forecast = build(ForecastConfig, _seeded(cfg.get("forecast"), seed), "forecast")
    try:
        return ex.PipelineConfig(cfg.get("feature", "modes"), uvmd, forecast, float(cfg.get("window_fraction", 1.0)),
                                 float(cfg.get("time_of_day_period", 0.0)))
    except ConfigError as exc:
        raise ConfigError(str(exc), "pipeline") from None


def cmd_train_forecast(cfg: dict, args) -> dict:
    pcfg = _pipeline_config(cfg, args.seed)
    data, source = _load_dataset(cfg, args.seed)
    names = ["forecaster.json", "pipeline.json", "metrics.json"]
    if pcfg.feature == "modes":
        names.append("uvmd_params.json")
    paths = Outputs(args.out, args.force).claim(*names)
    res = ex.forecast_pipeline(data, pcfg, args.threads)
    res.forecaster.save(paths[0])
    if res.uvmd is not None:
        res.uvmd.save(paths[3])
    write_json(paths[1], {"kind": "forecast-pipeline", "source": source, "feature": pcfg.feature,
                          "window_fraction": pcfg.window_fraction,
                          "time_of_day_period": pcfg.time_of_day_period, "forecast": dataclasses.asdict(pcfg.forecast),
                          "uvmd": dataclasses.asdict(pcfg.uvmd), "node_mean": res.mean, "node_std": res.std,
                          "uvmd_params": "uvmd_params.json" if res.uvmd is not None else None})
    write_json(paths[2], {"kind": "forecast-metrics", "horizons": res.test, **res.summary()})
    return {"files": [str(p) for p in paths], "val_mae": res.val_mae}


def cmd_eval(cfg: dict, args) -> dict:
    if "model_dir" not in cfg:
        raise ConfigError("path to a train-forecast output directory is required", "model_dir")
    mdir = _input_path(cfg["model_dir"], "model_dir")
    pipe_p = mdir / "pipeline.json"
    if not pipe_p.exists():
        raise InvalidInputError(f"pipeline file not found: {pipe_p}; run `modegraph train-forecast` first")
    pipe = json.loads(pipe_p.read_text())
    data, source = _load_dataset(cfg if ("dataset_dir" in cfg or "dataset" in cfg) else pipe["source"], None)
    (out_p,) = Outputs(args.out, args.force).claim("eval_metrics.json")
    model = ForecasterParams.load(mdir / "forecaster.json")
    fcfg = build(ForecastConfig, {k: v for k, v in pipe["forecast"].items() if k != "split"}, "forecast")
    split = SplitConfig(**pipe["forecast"]["split"])
    mean, std = np.asarray(pipe["node_mean"]), np.asarray(pipe["node_std"])
    values = data.values
    if values.shape[0] != len(mean):
        raise InvalidInputError(f"dataset has {values.shape[0]} nodes, the model expects {len(mean)}")
    normalized = (values - mean[:, None]) / std[:, None]
    params = UvmdParams.load(mdir / pipe["uvmd_params"]) if pipe["uvmd_params"] else None
    feature_cfg = ex.PipelineConfig(pipe["feature"], forecast=fcfg, window_fraction=pipe["window_fraction"],
                                    time_of_day_period=pipe.get("time_of_day_period", 0.0))
    features = ex.build_features(normalized, feature_cfg, params, args.threads)
    windows, targets, _ = make_windows(features, normalized, model.T_w, model.T_out)
    part = cfg.get("part", "test")
    slices = dict(zip(("train", "val", "test", "all"), (*split.bounds(len(windows)), slice(None))))
    if part not in slices:
        raise ConfigError(f"must be one of {sorted(slices)}, got {part!r}", "part")
    graph = build_laplacians(data.adjacency)
    pred = predict(windows[slices[part]], graph, model)
    scale, shift = std[None, :, None], mean[None, :, None]
    result = horizon_metrics(pred * scale + shift, targets[slices[part]] * scale + shift)
    write_json(out_p, {"kind": "forecast-eval", "source": source, "part": part, "horizons": result})
    return {"files": [str(out_p)], "average_mae": result["average"]["MAE"]}


def cmd_bench(cfg: dict, args) -> dict:
    bcfg = build(ex.BenchConfig, _seeded(cfg.get("bench"), args.seed), "bench")
    (out_p,) = Outputs(args.out, args.force).claim("bench.json")
    result = ex.run_bench(bcfg, args.threads)
    write_json(out_p, {"kind": "bench", **result})
    return {"files": [str(out_p)], "speedup": result["speedup"]}


def cmd_ablate(cfg: dict, args) -> dict:
    dataset = build(GraphDatasetSpec, _seeded({"broadband": 1.0, **(cfg.get("dataset") or {})}, args.seed), "dataset")
    uvmd = build(UvmdTrainConfig, _seeded({"K": 13, "max_epochs": 30, **(cfg.get("uvmd") or {})}, args.seed), "uvmd")
    forecast = build(ForecastConfig, _seeded({"max_epochs": 20, **(cfg.get("forecast") or {})}, args.seed), "forecast")
    grid = {k: tuple(v) for k, v in cfg.items() if k in ("cases", "case_iii_K", "case_iii_depth", "fractions")}
    acfg = build(ex.AblateConfig, {}, "ablate")
    try:
        acfg = dataclasses.replace(acfg, dataset=dataset, uvmd=uvmd, forecast=forecast, **grid)
    except (ConfigError, TypeError) as exc:
        raise ConfigError(str(exc), "ablate") from None
    for f in acfg.fractions:
        ex.chunk_length(dataset.length, f)
    csv_p, json_p = Outputs(args.out, args.force).claim("ablation.csv", "ablation.json")
    rows = ex.run_ablation(acfg, args.threads)
    with csv_p.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ex.ABLATE_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    write_json(json_p, {"kind": "ablation", "dataset": dataset.to_dict(), "uvmd": dataclasses.asdict(uvmd),
                        "forecast": dataclasses.asdict(forecast), "rows": rows})
    return {"files": [str(csv_p), str(json_p)], "cells": len(rows)}


COMMANDS = {
    "gen": (cmd_gen, "generate a synthetic graph dataset"),
    "decompose": (cmd_decompose, "decompose signals with the iterative or unfolded engine"),
    "train-uvmd": (cmd_train_uvmd, "train unfolded decomposition parameters"),
    "train-forecast": (cmd_train_forecast, "train the graph forecaster on modes or raw series"),
    "eval": (cmd_eval, "evaluate a trained forecaster"),
    "bench": (cmd_bench, "time iterative against unfolded decomposition"),
    "ablate": (cmd_ablate, "run the shared-alpha / window-length / K x depth ablation grid"),
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--threads", type=int, default=ex.default_threads(), help="worker threads (default: all cores)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--force", action="store_true", help="allow overwriting existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="modegraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def _read_config(path: Path | None) -> dict:
    if path is None:
        return {}
    if not path.exists():
        raise ConfigError(f"file not found: {path}", "config")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON ({exc})", "config") from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", "config")
    return data


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    fn = COMMANDS[args.command][0]
    try:
        if args.threads < 1:
            raise ConfigError(f"must be >= 1, got {args.threads}", "threads")
        summary = fn(_read_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, TrainingFailure) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInputError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ModegraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(json.dumps(ex._jsonable(summary)))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
