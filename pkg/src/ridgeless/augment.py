"""Choosing how many pure-noise predictors to append before a ridgeless fit.

The total predictor count follows ``p = C * n * sqrt(p0)``; ``C`` is tuned by
cross-validation (exchangeable rows) or by rolling-window forecasts with the
noise regenerated ``R`` times (time-ordered rows).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import seeds
from ._parallel import pmap
from .dgp import augment_with_noise
from .errors import InvalidInputError
from .estimators import CvConfig, fit_pseudo_ols

GRID_STYLES = ("log", "linear")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def default_c_grid(n: int, p0: int, size: int = 20, style: str = "log") -> list:
    """``size`` values of C whose induced p spans ``[max(p0, 1.2 n), 50 n]``."""
    lo = max(p0, 1.2 * n) / (n * math.sqrt(p0))
    hi = 50.0 * n / (n * math.sqrt(p0))
    return c_grid(lo, hi, size, style)


def c_grid(lo: float, hi: float, size: int, style: str = "log") -> list:
    if not 0 < lo <= hi:
        raise InvalidInputError(f"need 0 < lo <= hi, got {lo}, {hi}")
    if size < 1:
        raise InvalidInputError("grid size must be >= 1")
    if style == "log":
        return list(np.geomspace(lo, hi, size))
    if style == "linear":
        return list(np.linspace(lo, hi, size))
    raise InvalidInputError(f"grid_style must be one of {GRID_STYLES}")


@dataclass
class AugmentPlan:
    p0: int
    n: int
    C_grid: list | None = None
    grid_style: str = "log"
    noise_sigma: float = 1.0
    regenerations: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.p0 < 1 or self.n < 2:
            raise InvalidInputError(f"need p0 >= 1 and n >= 2, got p0={self.p0}, n={self.n}")
        if self.grid_style not in GRID_STYLES:
            raise InvalidInputError(f"grid_style must be one of {GRID_STYLES}")
        if self.C_grid is None:
            self.C_grid = default_c_grid(self.n, self.p0, style=self.grid_style)
        self.C_grid = [float(c) for c in self.C_grid]
        if not self.C_grid:
            raise InvalidInputError("C_grid must be nonempty")
        if any(c <= 0 for c in self.C_grid) or any(b <= a for a, b in zip(self.C_grid, self.C_grid[1:])):
            raise InvalidInputError("C_grid must be positive and strictly ascending")
        if self.regenerations < 1:
            raise InvalidInputError("regenerations must be >= 1")
        if not self.noise_sigma > 0:
            raise InvalidInputError("noise_sigma must be positive")

    @property
    def p_grid(self) -> list:
        return [p_from_c(self, c) for c in self.C_grid]

    def noise_seed(self, c_index: int, r: int, *extra) -> int:
        return seeds.derive_seed(self.seed, "augment", c_index, r, *extra)


def p_from_c(plan: AugmentPlan, C: float) -> int:
    """Total predictor count ``round(C n sqrt(p0))``, never below ``p0``."""
    if not C > 0:
        raise InvalidInputError(f"C must be positive, got {C}")
    return max(plan.p0, _round_half_up(C * plan.n * math.sqrt(plan.p0)))


@dataclass
class TuneRecord:
    C: float
    p: int
    mean_loss: float
    std_loss: float


@dataclass
class TuneTrace:
    records: list
    chosen_index: int
    meta: dict = field(default_factory=dict)

    @property
    def chosen_C(self) -> float:
        return self.records[self.chosen_index].C

    @property
    def chosen_p(self) -> int:
        return self.records[self.chosen_index].p

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["C", "p", "mean_loss", "std_loss", "chosen"])
        for i, r in enumerate(self.records):
            w.writerow([repr(r.C), r.p, repr(r.mean_loss), repr(r.std_loss), int(i == self.chosen_index)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "records": [vars(r) for r in self.records],
            "chosen_C": self.chosen_C,
            "chosen_p": self.chosen_p,
            "meta": self.meta,
        }


def _summarize(plan: AugmentPlan, losses: list, meta: dict) -> TuneTrace:
    """Build the trace; the first (smallest) C among exact ties wins."""
    records = []
    for c, p, cell in zip(plan.C_grid, plan.p_grid, losses):
        flat = np.concatenate([np.atleast_1d(x) for x in cell])
        mean = math.fsum(flat) / flat.size
        std = float(np.std(flat, ddof=1)) if flat.size > 1 else 0.0
        records.append(TuneRecord(c, p, mean, std))
    means = [r.mean_loss for r in records]
    chosen = means.index(min(means))
    return TuneTrace(records, chosen, meta)


def _check_x0y(X0, Y, plan):
    X0 = np.asarray(X0, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64).ravel()
    if X0.ndim != 2 or X0.shape[0] != Y.size:
        raise InvalidInputError(f"X0 shape {X0.shape} does not match Y length {Y.size}")
    if X0.shape[1] != plan.p0:
        raise InvalidInputError(f"X0 has {X0.shape[1]} columns but plan.p0 = {plan.p0}")
    return X0, Y


def _kfold_cell(args):
    X0, Y, p, sigma, seed, splits = args
    X = augment_with_noise(X0, p - X0.shape[1], sigma, seed)
    out = np.empty(len(splits))
    for k, (tr, te) in enumerate(splits):
        fit = fit_pseudo_ols(X[tr], Y[tr])
        out[k] = np.mean((Y[te] - fit.predict(X[te])) ** 2)
    return out


def tune_c_kfold(X0, Y, plan: AugmentPlan, cv: CvConfig | None = None, workers: int = 1) -> TuneTrace:
    """Pick C by cross-validated pseudo-OLS loss on noise-augmented data.

    For every grid point and regeneration the noise block is drawn from a
    seed keyed by ``(C index, r)``; every fold of that cell sees the same
    augmented matrix.  The loss of a C is the mean held-out MSE over all
    (regeneration, fold) pairs.
    """
    X0, Y = _check_x0y(X0, Y, plan)
    cv = cv or CvConfig(folds=10, split_rule="eighty_twenty", seed=plan.seed)
    splits = cv.splits(Y.size)
    if any(len(tr) < 2 or len(te) < 1 for tr, te in splits):
        raise InvalidInputError("cross-validation produced a degenerate fold")
    cells = [
        (X0, Y, p, plan.noise_sigma, plan.noise_seed(ci, r), splits)
        for ci, p in enumerate(plan.p_grid)
        for r in range(plan.regenerations)
    ]
    res = pmap(_kfold_cell, cells, workers)
    R = plan.regenerations
    losses = [res[ci * R : (ci + 1) * R] for ci in range(len(plan.C_grid))]
    return _summarize(plan, losses, {"kind": "kfold", "folds": len(splits), "split_rule": cv.split_rule})


def rolling_origins(n: int, window: int, expanding: bool = False):
    """``(train_rows, test_row)`` pairs for one-step forecasts.

    Row ``t + 1`` is forecast from a fit on rows ``t - window + 1 .. t``
    (or ``0 .. t`` when ``expanding``), for ``t = window - 1 .. n - 2``.
    """
    if not 1 <= window < n:
        raise InvalidInputError(f"window must lie in [1, {n - 1}], got {window}")
    for t in range(window - 1, n - 1):
        start = 0 if expanding else t - window + 1
        yield np.arange(start, t + 1), t + 1


def _rolling_cell(args):
    X0, Y, p, sigma, seed, window = args
    X = augment_with_noise(X0, p - X0.shape[1], sigma, seed)
    out = []
    for tr, te in rolling_origins(Y.size, window):
        fit = fit_pseudo_ols(X[tr], Y[tr])
        out.append((Y[te] - fit.predict(X[te])[0]) ** 2)
    return np.array(out)


def tune_c_timeseries(X0, Y, plan: AugmentPlan, window: int, workers: int = 1) -> TuneTrace:
    """Pick C by rolling one-step forecasts with regenerated noise.

    For each C and each regeneration ``r`` a single noise stream spans all
    rows; the criterion is the squared forecast error summed over every
    ``(r, t)``.  The trace reports its mean.
    """
    X0, Y = _check_x0y(X0, Y, plan)
    if not 2 <= window < Y.size:
        raise InvalidInputError(f"window must lie in [2, n-1] = [2, {Y.size - 1}], got {window}")
    cells = [
        (X0, Y, p, plan.noise_sigma, plan.noise_seed(ci, r), window)
        for ci, p in enumerate(plan.p_grid)
        for r in range(plan.regenerations)
    ]
    res = pmap(_rolling_cell, cells, workers)
    R = plan.regenerations
    losses = [res[ci * R : (ci + 1) * R] for ci in range(len(plan.C_grid))]
    return _summarize(plan, losses, {"kind": "timeseries", "window": window})


def forecast_with_augmentation(X0_train, Y_train, X0_new, chosen_p: int, seed: int = 0, noise_sigma: float = 1.0) -> np.ndarray:
    """Append ``chosen_p - p0`` noise columns to train and new rows, fit, predict.

    Each noise column is one draw spanning the training rows followed by the
    new rows.
    """
    Xtr = np.asarray(X0_train, dtype=np.float64)
    Xnew = np.atleast_2d(np.asarray(X0_new, dtype=np.float64))
    Y_train = np.asarray(Y_train, dtype=np.float64).ravel()
    if Xtr.ndim != 2 or Xtr.shape[0] != Y_train.size:
        raise InvalidInputError(f"X0_train shape {Xtr.shape} does not match Y_train length {Y_train.size}")
    if Xnew.shape[1] != Xtr.shape[1]:
        raise InvalidInputError(f"X0_new has {Xnew.shape[1]} columns, expected {Xtr.shape[1]}")
    p0 = Xtr.shape[1]
    if chosen_p < p0:
        raise InvalidInputError(f"chosen_p={chosen_p} is below p0={p0}")
    X = augment_with_noise(np.vstack([Xtr, Xnew]), chosen_p - p0, noise_sigma, seed)
    m = Xtr.shape[0]
    return fit_pseudo_ols(X[:m], Y_train).predict(X[m:])
