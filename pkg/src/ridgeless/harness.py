"""Forecast evaluation: protocols, reports, out-of-sample R^2 and sweeps over p."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import seeds
from ._parallel import pmap
from .dataio import Dataset
from .dgp import FactorModelSpec, augment_with_noise, draw_oos, draw_sample
from .errors import InvalidInputError, UndefinedMetricError
from .estimators import METHODS, CvConfig, fit
from .augment import rolling_origins

log = logging.getLogger(__name__)

PROTOCOL_KINDS = ("random_split", "fixed_split", "rolling", "expanding")
SCENARIOS = ("unknown", "known")


def oos_r2(truth, prediction, benchmark) -> float:
    """``1 - sum (y - yhat)^2 / sum (y - ybar)^2`` with per-forecast benchmark means.

    A zero benchmark error with a zero forecast error returns 0.0 (forecast
    and benchmark are equally perfect); a zero benchmark error otherwise
    raises :class:`UndefinedMetricError`.
    """
    y = np.asarray(truth, dtype=np.float64).ravel()
    f = np.asarray(prediction, dtype=np.float64).ravel()
    b = np.asarray(benchmark, dtype=np.float64).ravel()
    if not (y.size == f.size == b.size) or y.size == 0:
        raise InvalidInputError("truth, prediction and benchmark must be nonempty and equally long")
    num = math.fsum((y - f) ** 2)
    den = math.fsum((y - b) ** 2)
    if den == 0.0:
        if num == 0.0:
            return 0.0
        raise UndefinedMetricError("benchmark squared error is zero")
    return 1.0 - num / den


@dataclass
class MethodSpec:
    """A forecasting method as the harness runs it.

    ``total_p`` (pseudo-OLS only) appends ``total_p - p0`` N(0, noise_sigma^2)
    columns to the predictors before fitting.
    """

    method: str
    total_p: int | None = None
    options: dict = field(default_factory=dict)
    cv: CvConfig | None = None
    noise_sigma: float = 1.0
    label: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.total_p is not None and self.method != "pseudo_ols":
            raise InvalidInputError("noise augmentation only applies to pseudo_ols")
        if self.label is None:
            self.label = self.method if self.total_p is None else f"{self.method}@{self.total_p}"

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSpec":
        d = dict(d)
        cv = d.pop("cv", None)
        if isinstance(cv, dict):
            cv = CvConfig(**cv)
        return cls(cv=cv, **d)

    def to_dict(self) -> dict:
        out = {"method": self.method, "total_p": self.total_p, "options": self.options,
               "noise_sigma": self.noise_sigma, "label": self.label}
        if self.cv is not None:
            out["cv"] = vars(self.cv)
        return out

    def design(self, X, seed: int):
        """Predictor matrix the method sees; noise columns span every row."""
        if self.total_p is None:
            return X
        p0 = X.shape[1]
        if self.total_p < p0:
            raise InvalidInputError(f"total_p={self.total_p} is below the {p0} available predictors")
        return augment_with_noise(X, self.total_p - p0, self.noise_sigma, seeds.derive_seed(seed, "noise"))

    def fit_predict(self, Xtr, ytr, Xte):
        fitted = fit(self.method, Xtr, ytr, cv=self.cv, **self.options)
        return fitted.predict(Xte), fitted


@dataclass
class Protocol:
    kind: str
    window: int | None = None
    fraction: float | None = None
    repetitions: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PROTOCOL_KINDS:
            raise InvalidInputError(f"protocol kind must be one of {PROTOCOL_KINDS}")
        if self.repetitions < 1:
            raise InvalidInputError("repetitions must be >= 1")
        if self.kind in ("rolling", "expanding"):
            if self.window is None or self.window < 2:
                raise InvalidInputError(f"{self.kind} protocol needs window >= 2")
        else:
            if self.fraction is None or not 0.0 < self.fraction < 1.0:
                raise InvalidInputError(f"{self.kind} protocol needs a fraction in (0, 1), got {self.fraction}")

    def to_dict(self) -> dict:
        return dict(vars(self))


@dataclass
class ForecastReport:
    method: str
    origins: list
    truth: np.ndarray
    prediction: np.ndarray
    benchmark: np.ndarray
    protocol: dict = field(default_factory=dict)
    repetitions: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    trace: dict | None = None
    p: int | None = None

    def __post_init__(self):
        self.truth = np.asarray(self.truth, dtype=np.float64)
        self.prediction = np.asarray(self.prediction, dtype=np.float64)
        self.benchmark = np.asarray(self.benchmark, dtype=np.float64)

    @property
    def mse(self) -> float:
        if self.truth.size == 0:
            return math.nan
        return math.fsum((self.truth - self.prediction) ** 2) / self.truth.size

    @property
    def r2(self) -> float:
        if self.truth.size == 0:
            return math.nan
        try:
            return oos_r2(self.truth, self.prediction, self.benchmark)
        except UndefinedMetricError:
            return math.nan

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "p": self.p,
            "protocol": self.protocol,
            "mse": self.mse,
            "r2": self.r2,
            "origins": list(self.origins),
            "truth": self.truth.tolist(),
            "prediction": self.prediction.tolist(),
            "benchmark": self.benchmark.tolist(),
            "repetitions": self.repetitions,
            "skipped": self.skipped,
            "trace": self.trace,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=True)

    @classmethod
    def from_json(cls, text: str) -> "ForecastReport":
        d = json.loads(text)
        return cls(d["method"], d["origins"], d["truth"], d["prediction"], d["benchmark"],
                   d["protocol"], d["repetitions"], d["skipped"], d["trace"], d["p"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["origin", "truth", "prediction", "benchmark"])
        for o, y, f, b in zip(self.origins, self.truth, self.prediction, self.benchmark):
            w.writerow([o, repr(float(y)), repr(float(f)), repr(float(b))])
        return buf.getvalue()


def _mean(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(v[0] + np.mean(v - v[0]))


# -- protocols ---------------------------------------------------------------------


def run_rolling(data: Dataset, method: MethodSpec, window: int, expanding: bool = False,
                seed: int = 0, workers: int = 1) -> ForecastReport:
    """One-step-ahead forecasts over moving (or expanding) windows.

    Row ``t + 1`` is forecast from a fit on rows ``t - window + 1 .. t``; the
    benchmark is the training-window mean of the target.  Windows touching a
    non-finite value are skipped and logged.
    """
    if not 2 <= window < data.n:
        raise InvalidInputError(f"window must lie in [2, {data.n - 1}] for {data.n} rows, got {window}")
    X = method.design(data.X, seed)
    origins = list(rolling_origins(data.n, window, expanding))
    res = pmap(_rolling_cell, [(X, data.y, method, tr, te) for tr, te in origins], workers)
    rep = ForecastReport(method.label, [], [], [], [], protocol={
        "kind": "expanding" if expanding else "rolling", "window": window, "seed": seed,
    }, p=X.shape[1])
    truth, pred, bench = [], [], []
    for (tr, te), out in zip(origins, res):
        if out is None:
            rep.skipped.append(data.index[te])
            log.warning("skipped forecast of row %s: non-finite values in window", data.index[te])
            continue
        rep.origins.append(data.index[te])
        truth.append(data.y[te])
        pred.append(out[0])
        bench.append(out[1])
    rep.truth, rep.prediction, rep.benchmark = (np.array(v, dtype=np.float64) for v in (truth, pred, bench))
    return rep


def _rolling_cell(args):
    X, y, method, tr, te = args
    Xtr, ytr, xte = X[tr], y[tr], X[te : te + 1]
    if not (np.all(np.isfinite(Xtr)) and np.all(np.isfinite(ytr)) and np.all(np.isfinite(xte)) and np.isfinite(y[te])):
        return None
    pred, _ = method.fit_predict(Xtr, ytr, xte)
    return float(pred[0]), _mean(ytr)


def _split_cell(args):
    X, y, method, tr, te = args
    pred, fitted = method.fit_predict(X[tr], y[tr], X[te])
    train_mse = float(np.mean((y[tr] - fitted.predict(X[tr])) ** 2))
    return pred, _mean(y[tr]), train_mse


def _split_report(data, method, X, splits, protocol, workers) -> ForecastReport:
    res = pmap(_split_cell, [(X, data.y, method, tr, te) for tr, te in splits], workers)
    origins, truth, pred, bench, reps = [], [], [], [], []
    for r, ((tr, te), (f, b, train_mse)) in enumerate(zip(splits, res)):
        origins += [data.index[i] for i in te]
        truth.append(data.y[te])
        pred.append(f)
        bench.append(np.full(te.size, b))
        reps.append({"repetition": r, "n_train": int(tr.size), "n_test": int(te.size),
                     "mse": float(np.mean((data.y[te] - f) ** 2)), "train_mse": train_mse})
    return ForecastReport(method.label, origins, np.concatenate(truth), np.concatenate(pred),
                          np.concatenate(bench), protocol, reps, p=X.shape[1])


def run_random_split(data: Dataset, method: MethodSpec, fraction: float, repetitions: int,
                     seed: int = 0, workers: int = 1) -> ForecastReport:
    """Repeated random train/test splits; ``fraction`` of rows train each time."""
    Protocol("random_split", fraction=fraction, repetitions=repetitions, seed=seed)
    n_train = int(round(fraction * data.n))
    if n_train < 2 or n_train >= data.n:
        raise InvalidInputError(f"fraction {fraction} leaves a degenerate split of {data.n} rows")
    splits = []
    for r in range(repetitions):
        perm = seeds.rng(seed, "random_split", r).permutation(data.n)
        splits.append((np.sort(perm[:n_train]), np.sort(perm[n_train:])))
    X = method.design(data.X, seed)
    proto = {"kind": "random_split", "fraction": fraction, "repetitions": repetitions, "seed": seed}
    return _split_report(data, method, X, splits, proto, workers)


def run_fixed_split(data: Dataset, method: MethodSpec, fraction: float, seed: int = 0) -> ForecastReport:
    """First ``fraction`` of rows (in order) train; the rest are forecast."""
    Protocol("fixed_split", fraction=fraction, seed=seed)
    n_train = int(round(fraction * data.n))
    if n_train < 2 or n_train >= data.n:
        raise InvalidInputError(f"fraction {fraction} leaves a degenerate split of {data.n} rows")
    X = method.design(data.X, seed)
    splits = [(np.arange(n_train), np.arange(n_train, data.n))]
    return _split_report(data, method, X, splits, {"kind": "fixed_split", "fraction": fraction, "seed": seed}, 1)


def run_protocol(data: Dataset, method: MethodSpec, protocol: Protocol, workers: int = 1) -> ForecastReport:
    if protocol.kind in ("rolling", "expanding"):
        return run_rolling(data, method, protocol.window, protocol.kind == "expanding", protocol.seed, workers)
    if protocol.kind == "random_split":
        return run_random_split(data, method, protocol.fraction, protocol.repetitions, protocol.seed, workers)
    return run_fixed_split(data, method, protocol.fraction, protocol.seed)


# -- sweeps --------------------------------------------------------------------------


@dataclass
class SimulationProtocol:
    """Monte-Carlo protocol for sweeps over a simulated design.

    ``scenario="unknown"``: every method sees the first ``p`` predictors.
    ``scenario="known"``: pseudo-OLS sees the first ``p``, the comparators only
    the informative block.
    """

    replications: int = 50
    test_size: int = 50
    scenario: str = "unknown"
    seed: int = 0

    def __post_init__(self):
        if self.replications < 1:
            raise InvalidInputError("replications must be >= 1")
        if self.test_size < 1:
            raise InvalidInputError("test_size must be >= 1")
        if self.scenario not in SCENARIOS:
            raise InvalidInputError(f"scenario must be one of {SCENARIOS}")


@dataclass
class SweepRow:
    method: str
    p: int
    report: ForecastReport

    @property
    def mse(self) -> float:
        return self.report.mse

    @property
    def rep_mse(self) -> np.ndarray:
        return np.array([r["mse"] for r in self.report.repetitions])


def sweep_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "p", "mse", "r2"])
    for r in rows:
        w.writerow([r.method, r.p, repr(r.report.mse), repr(r.report.r2)])
    return buf.getvalue()


def _sim_cell(args):
    spec, methods, p_grid, proto, r = args
    p_max = max(p_grid)
    rep_spec = spec.with_(p=p_max, noise_seed=seeds.derive_seed(proto.seed, "sweep", r))
    sample = draw_sample(rep_spec)
    X_new, y_new, _ = draw_oos(rep_spec, proto.test_size, seeds.derive_seed(proto.seed, "sweep-oos", r))
    bench = _mean(sample.y)
    out = {}
    pinned = {}
    for m in methods:
        for p in p_grid:
            cols = p
            if proto.scenario == "known" and m.method != "pseudo_ols":
                cols = spec.p0
                if m.label in pinned:
                    out[(m.label, p)] = pinned[m.label]
                    continue
            pred, _ = m.fit_predict(sample.X[:, :cols], sample.y, X_new[:, :cols])
            out[(m.label, p)] = pred
            if cols == spec.p0 and proto.scenario == "known" and m.method != "pseudo_ols":
                pinned[m.label] = pred
    return y_new, bench, out


def run_sweep(source, methods, p_grid, protocol=None, workers: int = 1) -> list:
    """Every method at every ``p``; returns :class:`SweepRow` objects.

    ``source`` is a :class:`FactorModelSpec` (Monte Carlo under a
    :class:`SimulationProtocol`) or a :class:`Dataset` (under a
    :class:`Protocol`; pseudo-OLS is augmented with noise up to ``p`` and the
    comparators use the dataset's own predictors).
    """
    methods = [m if isinstance(m, MethodSpec) else MethodSpec.from_dict(m) if isinstance(m, dict) else MethodSpec(m)
               for m in methods]
    if not methods:
        return []
    p_grid = [int(p) for p in p_grid]
    if not p_grid:
        raise InvalidInputError("p_grid must be nonempty")
    if isinstance(source, FactorModelSpec):
        return _sweep_simulated(source, methods, p_grid, protocol or SimulationProtocol(), workers)
    if isinstance(source, Dataset):
        if protocol is None:
            raise InvalidInputError("a dataset sweep needs a Protocol")
        return _sweep_dataset(source, methods, p_grid, protocol, workers)
    raise InvalidInputError(f"unsupported sweep source {type(source).__name__}")


def _sweep_simulated(spec, methods, p_grid, proto, workers):
    if min(p_grid) < 1:
        raise InvalidInputError("p values must be positive")
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise InvalidInputError("method labels must be unique")
    res = pmap(_sim_cell, [(spec, methods, p_grid, proto, r) for r in range(proto.replications)], workers)
    rows = []
    for m in methods:
        for p in p_grid:
            truth, pred, bench, origins, reps = [], [], [], [], []
            for r, (y_new, b, out) in enumerate(res):
                f = out[(m.label, p)]
                truth.append(y_new)
                pred.append(f)
                bench.append(np.full(y_new.size, b))
                origins += [f"{r}:{j}" for j in range(y_new.size)]
                reps.append({"repetition": r, "mse": float(np.mean((y_new - f) ** 2))})
            rep = ForecastReport(m.label, origins, np.concatenate(truth), np.concatenate(pred),
                                 np.concatenate(bench), {"kind": "simulation", **vars(proto)}, reps, p=p)
            rows.append(SweepRow(m.label, p, rep))
    return rows


def _sweep_dataset(data, methods, p_grid, protocol, workers):
    rows = []
    for m in methods:
        base = None
        for p in p_grid:
            if m.method == "pseudo_ols":
                if p < data.p:
                    raise InvalidInputError(f"p={p} is below the dataset's {data.p} predictors")
                mp = MethodSpec(m.method, p if p > data.p else None, m.options, m.cv, m.noise_sigma, m.label)
                rep = run_protocol(data, mp, protocol, workers)
            else:
                base = base or run_protocol(data, m, protocol, workers)
                rep = base
            rows.append(SweepRow(m.label, p, rep))
    return rows
