"""Command-line entry point.

Each command reads one JSON config (``--config``), applies flag overrides,
writes the resolved config to ``<out>/config.json`` and its artifacts beside
it.  Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import augment, dataio, harness, seeds, theory
from ._parallel import default_workers
from .dgp import FactorModelSpec, draw_sample
from .errors import ConfigError, DataError, InvalidInputError, NumericalError, UndefinedMetricError
from .estimators import CvConfig
from .linalg import min_norm_solve

log = logging.getLogger("ridgeless")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

_KEYS = {
    "theory-curve": {"model", "p_grid", "replications", "seed"},
    "simulate": {"model", "p_grid", "methods", "replications", "test_size", "scenario", "seed"},
    "forecast": {"data", "protocol", "method", "augment", "seed"},
    "benchmark": {"grid", "runs", "seed"},
    "tune": {"data", "model", "augment", "seed"},
}


# -- config helpers ----------------------------------------------------------------


def _require(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"{where}{key}: required")
    return cfg[key]


def _check_keys(cfg: dict, allowed: set, where: str):
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _p_grid(value, where="p_grid") -> list:
    """A list of ints, or ``{"start", "stop", "step"}`` (stop inclusive)."""
    if isinstance(value, dict):
        _check_keys(value, {"start", "stop", "step"}, where)
        try:
            grid = list(range(int(value["start"]), int(value["stop"]) + 1, int(value.get("step", 1))))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    elif isinstance(value, list):
        grid = [int(v) for v in value]
    else:
        raise ConfigError(f"{where}: expected a list or a start/stop/step object")
    if not grid:
        raise ConfigError(f"{where}: grid is empty")
    return grid


def _model(cfg: dict, where="model", p_default=None) -> FactorModelSpec:
    d = dict(cfg)
    if "p" not in d and p_default is not None:
        d["p"] = p_default
    try:
        return FactorModelSpec.from_dict(d)
    except (InvalidInputError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _cv(d, where) -> CvConfig | None:
    if d is None:
        return None
    try:
        return CvConfig(**d)
    except (InvalidInputError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _methods(items, where="methods") -> list:
    out = []
    for i, m in enumerate(items):
        try:
            out.append(harness.MethodSpec(m) if isinstance(m, str) else harness.MethodSpec.from_dict(m))
        except (InvalidInputError, TypeError) as exc:
            raise ConfigError(f"{where}[{i}]: {exc}") from exc
    return out


def _dataset(cfg: dict, where="data") -> dataio.Dataset:
    _check_keys(cfg, {"path", "target", "index", "transforms"}, where)
    d = dataio.load_csv(_require(cfg, "path", f"{where}."), _require(cfg, "target", f"{where}."), cfg.get("index"))
    return dataio.apply_transforms(d, cfg.get("transforms", []))


def _write(path: Path, text: str):
    path.write_text(text)
    log.info("wrote %s", path)


def _write_config(out: Path, cfg: dict):
    _write(out / "config.json", json.dumps(cfg, indent=2, sort_keys=True) + "\n")


# -- commands -----------------------------------------------------------------------


def cmd_theory_curve(cfg: dict, out: Path, workers: int):
    p_grid = _p_grid(_require(cfg, "p_grid", ""))
    spec = _model(_require(cfg, "model", ""), p_default=max(p_grid))
    reps = int(cfg.get("replications", 500))
    if reps < 1:
        raise ConfigError("replications: must be >= 1")
    curve = theory.risk_curve(spec, p_grid, reps, seed=seeds.derive_seed(cfg["seed"], "theory-curve"), workers=workers)
    _write(out / "risk_curve.csv", curve.to_csv())


def cmd_simulate(cfg: dict, out: Path, workers: int):
    p_grid = _p_grid(_require(cfg, "p_grid", ""))
    spec = _model(_require(cfg, "model", ""), p_default=max(p_grid))
    methods = _methods(cfg.get("methods", ["pseudo_ols"]))
    reps = int(cfg.get("replications", 50))
    if reps < 1:
        raise ConfigError("replications: must be >= 1")
    try:
        proto = harness.SimulationProtocol(reps, int(cfg.get("test_size", 50)), cfg.get("scenario", "unknown"),
                                           seeds.derive_seed(cfg["seed"], "simulate"))
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc
    rows = harness.run_sweep(spec, methods, p_grid, proto, workers=workers)
    _write(out / "sweep.csv", harness.sweep_to_csv(rows))


def _augment_plan(acfg: dict, p0: int, n: int, seed: int) -> augment.AugmentPlan:
    grid = acfg.get("C_grid")
    style = acfg.get("grid_style", "log")
    if isinstance(grid, dict):
        _check_keys(grid, {"lo", "hi", "size"}, "augment.C_grid")
        grid = augment.c_grid(float(grid["lo"]), float(grid["hi"]), int(grid.get("size", 20)), style)
    try:
        return augment.AugmentPlan(p0, n, grid, style, float(acfg.get("noise_sigma", 1.0)),
                                   int(acfg.get("regenerations", 20)), seed)
    except InvalidInputError as exc:
        raise ConfigError(f"augment: {exc}") from exc


def _tune(X0, Y, acfg: dict, plan, workers) -> augment.TuneTrace:
    mode = acfg.get("mode", "kfold")
    if mode == "kfold":
        cv = _cv(acfg.get("cv", {"folds": 10, "split_rule": "eighty_twenty", "seed": plan.seed}), "augment.cv")
        return augment.tune_c_kfold(X0, Y, plan, cv, workers=workers)
    if mode == "timeseries":
        return augment.tune_c_timeseries(X0, Y, plan, int(_require(acfg, "window", "augment.")), workers=workers)
    raise ConfigError(f"augment.mode: expected 'kfold' or 'timeseries', got {mode!r}")


_AUGMENT_KEYS = {"C_grid", "grid_style", "noise_sigma", "regenerations", "mode", "cv", "window",
                 "tune", "tune_rows", "p_grid", "plan_n"}


def cmd_forecast(cfg: dict, out: Path, workers: int):
    data = _dataset(_require(cfg, "data", ""))
    pcfg = dict(_require(cfg, "protocol", ""))
    pcfg.setdefault("seed", seeds.derive_seed(cfg["seed"], "forecast"))
    try:
        proto = harness.Protocol(**pcfg)
    except (InvalidInputError, TypeError) as exc:
        raise ConfigError(f"protocol: {exc}") from exc
    if proto.kind in ("rolling", "expanding") and data.index_name is None:
        raise DataError("rolling protocols need a dataset with an index column")
    method = _methods([cfg.get("method", "pseudo_ols")], "method")[0]
    acfg = cfg.get("augment")
    if acfg is None:
        report = harness.run_protocol(data, method, proto, workers)
        _write(out / "report.json", report.to_json() + "\n")
        _write(out / "predictions.csv", report.to_csv())
        return
    _check_keys(acfg, _AUGMENT_KEYS, "augment")
    if method.method != "pseudo_ols":
        raise ConfigError("augment: noise augmentation needs method pseudo_ols")
    n_fit = {"rolling": proto.window, "expanding": proto.window}.get(proto.kind)
    if n_fit is None:
        n_fit = int(round(proto.fraction * data.n))
    plan = _augment_plan(acfg, data.p, int(acfg.get("plan_n", n_fit)), seeds.derive_seed(cfg["seed"], "augment"))

    if acfg.get("tune", False):
        rows = acfg.get("tune_rows")
        if rows is None:
            if proto.kind != "fixed_split":
                raise ConfigError("augment.tune_rows: required unless the protocol is fixed_split")
            rows = n_fit
        rows = int(rows)
        if not 2 < rows <= data.n:
            raise ConfigError(f"augment.tune_rows: must lie in (2, {data.n}]")
        trace = _tune(data.X[:rows], data.y[:rows], acfg, plan, workers)
        _write(out / "tune_trace.csv", trace.to_csv())
        p_list = [trace.chosen_p]
    else:
        trace = None
        p_list = _p_grid(acfg["p_grid"], "augment.p_grid") if "p_grid" in acfg else sorted(set(plan.p_grid))

    reports = []
    for p in p_list:
        m = harness.MethodSpec("pseudo_ols", p if p > data.p else None, method.options, method.cv, plan.noise_sigma)
        rep = harness.run_protocol(data, m, proto, workers)
        if trace is not None:
            rep.trace = trace.to_dict()
        reports.append(rep)
    if len(reports) == 1:
        _write(out / "report.json", reports[0].to_json() + "\n")
        _write(out / "predictions.csv", reports[0].to_csv())
    else:
        summary = {"reports": [{"p": r.p, "mse": r.mse, "r2": r.r2, "method": r.method} for r in reports],
                   "protocol": proto.to_dict()}
        _write(out / "report.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
        lines = ["p," + reports[0].to_csv().splitlines()[0]]
        for r in reports:
            lines += [f"{r.p},{line}" for line in r.to_csv().splitlines()[1:]]
        _write(out / "predictions.csv", "\n".join(lines) + "\n")
        _write(out / "sweep.csv", harness.sweep_to_csv([harness.SweepRow(r.method, r.p, r) for r in reports]))


def cmd_tune(cfg: dict, out: Path, workers: int):
    acfg = dict(_require(cfg, "augment", ""))
    _check_keys(acfg, _AUGMENT_KEYS, "augment")
    if ("data" in cfg) == ("model" in cfg):
        raise ConfigError("exactly one of data or model is required")
    if "data" in cfg:
        d = _dataset(cfg["data"])
        X0, Y = d.X, d.y
    else:
        spec = _model(cfg["model"], p_default=cfg["model"].get("p0"))
        spec = spec.with_(p=spec.p0, noise_seed=seeds.derive_seed(cfg["seed"], "tune-sample"))
        s = draw_sample(spec)
        X0, Y = s.X, s.y
    n_plan = int(acfg.get("plan_n", round(0.8 * Y.size) if acfg.get("mode", "kfold") == "kfold" else acfg.get("window", Y.size)))
    plan = _augment_plan(acfg, X0.shape[1], n_plan, seeds.derive_seed(cfg["seed"], "augment"))
    trace = _tune(X0, Y, acfg, plan, workers)
    _write(out / "tune_trace.csv", trace.to_csv())


def cmd_benchmark(cfg: dict, out: Path, workers: int):
    grid = _require(cfg, "grid", "")
    if not isinstance(grid, list) or not grid:
        raise ConfigError("grid: expected a nonempty list of [n, p] pairs")
    runs = int(cfg.get("runs", 5))
    if runs < 5:
        raise ConfigError("runs: must be >= 5")
    rows = []
    for i, pair in enumerate(grid):
        try:
            n, p = (int(v) for v in pair)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"grid[{i}]: expected [n, p]") from exc
        if n < 1 or p < 1:
            raise ConfigError(f"grid[{i}]: n and p must be positive")
        g = seeds.rng(cfg["seed"], "benchmark", n, p)
        X = g.standard_normal((n, p))
        y = g.standard_normal(n)
        times = []
        for _ in range(runs):
            t0 = time.perf_counter()
            min_norm_solve(X, y)
            times.append((time.perf_counter() - t0) * 1e3)
        rows.append((n, p, float(np.median(times))))
    with (out / "timings.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "p", "median_ms"])
        for n, p, ms in rows:
            w.writerow([n, p, f"{ms:.4f}"])


COMMANDS = {
    "theory-curve": cmd_theory_curve,
    "simulate": cmd_simulate,
    "forecast": cmd_forecast,
    "benchmark": cmd_benchmark,
    "tune": cmd_tune,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ridgeless", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=True, help="JSON config file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="global seed (overrides the config)")
        p.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        try:
            cfg = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        _check_keys(cfg, _KEYS[args.command], "config")
        if args.seed is not None:
            cfg["seed"] = args.seed
        cfg.setdefault("seed", 0)
        if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
            raise ConfigError("seed: expected a nonnegative integer")
        workers = args.workers or default_workers()
        args.out.mkdir(parents=True, exist_ok=True)
        _write_config(args.out, {"command": args.command, **cfg})
        COMMANDS[args.command](cfg, args.out, workers)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, InvalidInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, UndefinedMetricError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
