"""Linear forecasting methods: ridgeless least squares and its comparators.

Every estimator centers the target and the predictors and restores an
intercept, so ``predict(x) = intercept + x @ coefficients``.  Ridge, Lasso and
PCA regression also standardize predictors (population scale, ``ddof=0``)
before fitting and map coefficients back to the raw scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import seeds
from ._lasso import lasso_path
from .errors import InvalidInputError, NumericalError
from .linalg import DEFAULT_RCOND, min_norm_solve, reduced_svd, ridge_solve

METHODS = ("pseudo_ols", "ols", "ridge", "lasso", "pca")
SPLIT_RULES = ("kfold", "eighty_twenty", "time_ordered")

LASSO_TOL = 1e-7
LASSO_MAX_SWEEPS = 10_000


@dataclass
class LinearPredictor:
    coefficients: np.ndarray
    intercept: float
    method: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        self.intercept = float(self.intercept)
        if not (np.all(np.isfinite(self.coefficients)) and math.isfinite(self.intercept)):
            raise NumericalError(f"{self.method} produced non-finite coefficients")

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.coefficients.size:
            raise InvalidInputError(f"expected {self.coefficients.size} columns, got {X.shape[1]}")
        return self.intercept + X @ self.coefficients

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "intercept": self.intercept,
            "coefficients": self.coefficients.tolist(),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "LinearPredictor":
        return cls(np.asarray(d["coefficients"]), d["intercept"], d["method"], dict(d.get("metadata", {})))

    @classmethod
    def from_json(cls, text: str) -> "LinearPredictor":
        return cls.from_dict(json.loads(text))


@dataclass
class CvConfig:
    """Cross-validation settings.

    ``split_rule``:
      * ``"kfold"``: shuffled K-fold partition;
      * ``"eighty_twenty"``: ``folds`` independent random 80/20 train/test splits;
      * ``"time_ordered"``: forward chaining over ``folds + 1`` contiguous blocks
        (train on the blocks before each test block, never after).

    ``grid=None`` lets each method build its own penalty grid.
    """

    folds: int = 10
    split_rule: str = "kfold"
    grid: list | None = None
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise InvalidInputError(f"folds must be >= 2, got {self.folds}")
        if self.split_rule not in SPLIT_RULES:
            raise InvalidInputError(f"split_rule must be one of {SPLIT_RULES}")
        if self.grid is not None:
            self.grid = [float(g) for g in self.grid]
            if not self.grid:
                raise InvalidInputError("grid must be nonempty")

    def splits(self, n: int) -> list:
        """List of ``(train_idx, test_idx)`` pairs for ``n`` rows."""
        g = seeds.rng(self.seed, "cv", self.split_rule, n)
        if self.split_rule == "kfold":
            if n < self.folds:
                raise InvalidInputError(f"{n} rows cannot fill {self.folds} folds")
            perm = g.permutation(n)
            parts = np.array_split(perm, self.folds)
            out = []
            for k in range(self.folds):
                train = np.sort(np.concatenate([parts[i] for i in range(self.folds) if i != k]))
                out.append((train, np.sort(parts[k])))
        elif self.split_rule == "eighty_twenty":
            n_test = int(round(0.2 * n))
            if n_test < 1 or n - n_test < 2:
                raise InvalidInputError(f"{n} rows are too few for an 80/20 split")
            out = []
            for _ in range(self.folds):
                perm = g.permutation(n)
                out.append((np.sort(perm[n_test:]), np.sort(perm[:n_test])))
        else:
            blocks = np.array_split(np.arange(n), self.folds + 1)
            if min(len(b) for b in blocks) < 1 or len(blocks[0]) < 2:
                raise InvalidInputError(f"{n} rows are too few for {self.folds} time-ordered folds")
            out = [(np.concatenate(blocks[:k]), blocks[k]) for k in range(1, self.folds + 1)]
        return out


# -- shared helpers -------------------------------------------------------------


def _check_xy(X, Y):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise InvalidInputError(f"X must be 2-D, got shape {X.shape}")
    if X.shape[0] != Y.size:
        raise InvalidInputError(f"X has {X.shape[0]} rows but Y has {Y.size}")
    if X.shape[0] < 2:
        raise InvalidInputError("need at least two observations")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise InvalidInputError("X and Y must be finite")
    return X, Y


def _mean(a, axis=None):
    # Exact for constant input: the shift makes every term zero.
    a = np.asarray(a, dtype=np.float64)
    ref = a[0] if axis == 0 else a.ravel()[0]
    return ref + np.mean(a - ref, axis=axis)


def _scale(Xc):
    sd = np.sqrt(np.mean(Xc * Xc, axis=0))
    return np.where(sd > 0, sd, 1.0)


def _householder_tail(Xc, yc):
    """Rows 2..n of ``P Xc`` and ``P yc`` with ``P`` the reflection taking 1/sqrt(n) to e_1.

    For centered data this is an orthonormal change of basis of the
    (n-1)-dimensional complement of the constant vector, so least-squares
    problems keep their solutions while the design regains full row rank.
    """
    n = Xc.shape[0]
    v = np.full(n, 1.0 / math.sqrt(n))
    v[0] -= 1.0
    c = 2.0 / float(v @ v)
    Z = Xc - np.outer(v, c * (v @ Xc))
    yz = yc - v * (c * float(v @ yc))
    return Z[1:], yz[1:]


def _prep(X, Y, standardize):
    xm = _mean(X, axis=0)
    ym = float(_mean(Y))
    Xc = X - xm
    scale = _scale(Xc) if standardize else np.ones(X.shape[1])
    if standardize:
        Xc = Xc / scale
    return Xc, Y - ym, xm, ym, scale


def _finish(b_std, xm, ym, scale, method, metadata):
    b = b_std / scale
    return LinearPredictor(b, ym - float(xm @ b), method, metadata)


# -- ridgeless / OLS ----------------------------------------------------------


def fit_pseudo_ols(X, Y, rcond: float = DEFAULT_RCOND, standardize: bool = False) -> LinearPredictor:
    """Minimum-norm least squares on centered data.

    For ``p >= n`` the fit interpolates: in-sample fitted values equal ``Y``.
    """
    X, Y = _check_xy(X, Y)
    Xc, yc, xm, ym, scale = _prep(X, Y, standardize)
    Z, yz = _householder_tail(Xc, yc)
    svd = reduced_svd(Z, rcond)
    b = min_norm_solve(Z, yz, svd=svd)
    return _finish(b, xm, ym, scale, "pseudo_ols", {"rank": svd.rank, "standardize": standardize, "rcond": rcond})


def fit_ols(X, Y) -> LinearPredictor:
    X, Y = _check_xy(X, Y)
    n, p = X.shape
    Xc, yc, xm, ym, scale = _prep(X, Y, False)
    Z, yz = _householder_tail(Xc, yc)
    svd = reduced_svd(Z, 1e-12, method="lapack")
    if svd.rank < p:
        raise NumericalError(f"design is rank deficient after centering (rank {svd.rank} < p={p})")
    b = min_norm_solve(Z, yz, svd=svd)
    return _finish(b, xm, ym, scale, "ols", {"rank": svd.rank})


# -- ridge ---------------------------------------------------------------------


def default_ridge_grid(n: int, size: int = 41) -> list:
    return list(n * np.logspace(-4, 4, size))


def fit_ridge(X, Y, lam: float) -> LinearPredictor:
    """Ridge on standardized, centered predictors."""
    X, Y = _check_xy(X, Y)
    Xc, yc, xm, ym, scale = _prep(X, Y, True)
    Z, yz = _householder_tail(Xc, yc)
    b = ridge_solve(Z, yz, lam)
    return _finish(b, xm, ym, scale, "ridge", {"lambda": float(lam), "standardize": True})


def _ridge_fold_errors(X, Y, train, test, grid):
    Xc, yc, xm, ym, scale = _prep(X[train], Y[train], True)
    Z, yz = _householder_tail(Xc, yc)
    svd = reduced_svd(Z, DEFAULT_RCOND)
    s = svd.singular_values
    uty = svd.left.T @ yz
    T = ((X[test] - xm) / scale) @ svd.right  # m x r
    shrink = s[:, None] / (s[:, None] ** 2 + grid[None, :])  # r x L
    preds = ym + T @ (shrink * uty[:, None])
    return np.mean((Y[test][:, None] - preds) ** 2, axis=0)


def _select(scores, grid):
    """Index of the minimum score; ties go to the larger penalty."""
    best = np.min(scores)
    ties = np.flatnonzero(scores == best)
    return int(ties[np.argmax(grid[ties])])


def fit_ridge_cv(X, Y, cv: CvConfig | None = None) -> LinearPredictor:
    X, Y = _check_xy(X, Y)
    cv = cv or CvConfig()
    grid = np.asarray(cv.grid if cv.grid is not None else default_ridge_grid(X.shape[0]), dtype=np.float64)
    if np.any(grid <= 0):
        raise InvalidInputError("ridge grid values must be positive")
    splits = cv.splits(X.shape[0])
    errs = np.array([_ridge_fold_errors(X, Y, tr, te, grid) for tr, te in splits])
    scores = errs.mean(axis=0)
    k = _select(scores, grid)
    fit = fit_ridge(X, Y, grid[k])
    fit.metadata.update({"cv_scores": scores.tolist(), "grid": grid.tolist(), "folds": len(splits)})
    return fit


# -- lasso ---------------------------------------------------------------------


def lasso_lambda_max(X, Y) -> float:
    """Smallest penalty with an all-zero solution, on standardized centered data."""
    X, Y = _check_xy(X, Y)
    Xc, yc, *_ = _prep(X, Y, True)
    return float(np.max(np.abs(Xc.T @ yc)) / X.shape[0])


def default_lasso_grid(X, Y, size: int = 50, decades: float = 4.0) -> list:
    lmax = lasso_lambda_max(X, Y)
    if lmax == 0.0:
        return [1.0]
    return list(lmax * np.logspace(0.0, -decades, size))


def _lasso_solve_path(Xs, yc, lambdas, tol=LASSO_TOL, max_sweeps=LASSO_MAX_SWEEPS):
    # at or above lambda_max the solution is exactly zero (KKT)
    lmax = float(np.max(np.abs(Xs.T @ yc)) / Xs.shape[0])
    order = np.argsort(-lambdas, kind="stable")
    lam_sorted = np.ascontiguousarray(lambdas[order])
    Xf = np.asfortranarray(Xs)
    coefs, sweeps, failed = lasso_path(Xf, np.ascontiguousarray(yc), lam_sorted, tol, max_sweeps, np.zeros(Xs.shape[1]))
    if failed >= 0:
        raise NumericalError(
            f"coordinate descent did not converge in {max_sweeps} sweeps at lambda={lam_sorted[failed]:.3g}",
            iterate=coefs[failed].copy(),
        )
    coefs[lam_sorted >= lmax] = 0.0
    out = np.empty_like(coefs)
    out[order] = coefs
    return out, sweeps


def fit_lasso(X, Y, lam: float, tol: float = LASSO_TOL, max_sweeps: int = LASSO_MAX_SWEEPS) -> LinearPredictor:
    """Lasso at a single penalty, (1/2n)||y - Xb||^2 + lam ||b||_1 on standardized data.

    The solve is warm-started along a short geometric path from lambda_max.
    """
    X, Y = _check_xy(X, Y)
    if not lam > 0:
        raise InvalidInputError("lasso penalty must be positive")
    Xs, yc, xm, ym, scale = _prep(X, Y, True)
    lmax = float(np.max(np.abs(Xs.T @ yc)) / X.shape[0])
    if lam >= lmax:
        path = np.array([lam])
    else:
        path = np.append(np.geomspace(lmax, lam, 20)[:-1], lam)
    coefs, sweeps = _lasso_solve_path(Xs, yc, path, tol, max_sweeps)
    return _finish(coefs[-1], xm, ym, scale, "lasso", {"lambda": float(lam), "sweeps": int(sweeps.sum()), "standardize": True})


def fit_lasso_cv(X, Y, cv: CvConfig | None = None) -> LinearPredictor:
    X, Y = _check_xy(X, Y)
    cv = cv or CvConfig()
    grid = np.asarray(cv.grid if cv.grid is not None else default_lasso_grid(X, Y), dtype=np.float64)
    if np.any(grid <= 0):
        raise InvalidInputError("lasso grid values must be positive")
    splits = cv.splits(X.shape[0])
    errs = []
    for tr, te in splits:
        Xs, yc, xm, ym, scale = _prep(X[tr], Y[tr], True)
        coefs, _ = _lasso_solve_path(Xs, yc, grid)
        preds = ym + ((X[te] - xm) / scale) @ coefs.T
        errs.append(np.mean((Y[te][:, None] - preds) ** 2, axis=0))
    scores = np.mean(errs, axis=0)
    k = _select(scores, grid)
    lam = grid[k]
    Xs, yc, xm, ym, scale = _prep(X, Y, True)
    path = np.sort(grid[grid >= lam])[::-1]
    coefs, sweeps = _lasso_solve_path(Xs, yc, path)
    fit = _finish(coefs[-1], xm, ym, scale, "lasso", {"lambda": float(lam), "sweeps": int(sweeps.sum()), "standardize": True})
    fit.metadata.update({"cv_scores": scores.tolist(), "grid": grid.tolist(), "folds": len(splits)})
    return fit


# -- principal components regression -------------------------------------------


def default_kmax(n: int, p: int) -> int:
    return max(1, min(15, n // 2, p // 2))


def bai_ng(Xs, k_max: int, criterion: str = "pc_p1", svd=None):
    """Number of factors by Bai and Ng's PC_p1 (or IC_p1) criterion.

    ``Xs`` is a standardized n x p panel.  ``V(k)`` is the mean squared
    residual ``(1/np) sum (X - F_k L_k')^2`` of the k-factor principal
    components fit.

      PC_p1(k) = V(k) + k * V(k_max) * (n+p)/(np) * ln(np/(n+p))
      IC_p1(k) = ln V(k) + k * (n+p)/(np) * ln(np/(n+p))

    Returns ``(k_hat, criterion values for k = 1..k_max)``.
    """
    n, p = Xs.shape
    if svd is None:
        svd = reduced_svd(Xs, DEFAULT_RCOND)
    s2 = svd.singular_values**2
    total = float(np.sum(Xs * Xs))
    ks = np.arange(1, k_max + 1)
    explained = np.cumsum(np.pad(s2, (0, max(0, k_max - s2.size))))[:k_max]
    V = np.maximum(total - explained, 0.0) / (n * p)
    penalty = ks * (n + p) / (n * p) * math.log(n * p / (n + p))
    if criterion == "pc_p1":
        ic = V + penalty * V[-1]
    elif criterion == "ic_p1":
        ic = np.log(np.maximum(V, np.finfo(float).tiny)) + penalty
    else:
        raise InvalidInputError(f"unknown criterion {criterion!r}")
    return int(ks[np.argmin(ic)]), ic


def fit_pca_regression(X, Y, k: int | None = None, k_max: int | None = None, criterion: str = "pc_p1") -> LinearPredictor:
    """Principal components regression on standardized predictors.

    Factors are ``F = sqrt(n) U_k`` and loadings ``L = X'F/n`` from the SVD of
    the standardized panel.  A new row is mapped to factors by regressing it
    on the loadings, ``f_new = (L'L)^{-1} L' x_new``, and forecast with the
    coefficients of ``y`` on ``F``.  That composite map is linear in ``x_new``
    and is returned as ordinary coefficients.
    """
    X, Y = _check_xy(X, Y)
    n, p = X.shape
    Xs, yc, xm, ym, scale = _prep(X, Y, True)
    svd = reduced_svd(Xs, DEFAULT_RCOND)
    meta = {"standardize": True}
    if k is None:
        k_max = default_kmax(n, p) if k_max is None else int(k_max)
        if not 1 <= k_max <= min(n, p):
            raise InvalidInputError(f"k_max must lie in [1, {min(n, p)}]")
        k, ic = bai_ng(Xs, k_max, criterion, svd=svd)
        meta.update({"criterion": criterion, "k_max": k_max, "ic": ic.tolist()})
    k = int(k)
    if not 1 <= k <= min(n, p):
        raise InvalidInputError(f"k must lie in [1, min(n, p)={min(n, p)}], got {k}")
    if k > svd.rank:
        raise InvalidInputError(f"k={k} exceeds the numerical rank {svd.rank} of the predictors")
    U, s, V = svd.left[:, :k], svd.singular_values[:k], svd.right[:, :k]
    F = math.sqrt(n) * U
    gamma = F.T @ yc / n
    # f_new = sqrt(n) S^{-1} V' x_new, so y_new - ybar = x_new' V S^{-1} sqrt(n) gamma
    b = V @ (math.sqrt(n) * gamma / s)
    meta.update({"k": k, "factor_coefficients": gamma.tolist()})
    return _finish(b, xm, ym, scale, "pca", meta)


def pca_factors(fit_X, X_new, k: int):
    """Estimated in-sample factors and OOS factors ``(F_hat, f_new)`` for inspection."""
    X = np.asarray(fit_X, dtype=np.float64)
    n = X.shape[0]
    xm = _mean(X, axis=0)
    scale = _scale(X - xm)
    Xs = (X - xm) / scale
    svd = reduced_svd(Xs, DEFAULT_RCOND)
    U, s, V = svd.left[:, :k], svd.singular_values[:k], svd.right[:, :k]
    F = math.sqrt(n) * U
    L = Xs.T @ F / n
    Z = (np.atleast_2d(X_new) - xm) / scale
    f_new = np.linalg.solve(L.T @ L, L.T @ Z.T).T
    return F, f_new


def fit(method: str, X, Y, cv: CvConfig | None = None, **options) -> LinearPredictor:
    """Dispatch by method name: ``pseudo_ols``, ``ols``, ``ridge``, ``lasso``, ``pca``.

    ``ridge`` and ``lasso`` are tuned by cross-validation unless a fixed
    ``lam`` is passed.
    """
    if method == "pseudo_ols":
        return fit_pseudo_ols(X, Y, **options)
    if method == "ols":
        return fit_ols(X, Y)
    if method == "ridge":
        if "lam" in options:
            return fit_ridge(X, Y, options["lam"])
        return fit_ridge_cv(X, Y, cv)
    if method == "lasso":
        if "lam" in options:
            return fit_lasso(X, Y, options["lam"])
        return fit_lasso_cv(X, Y, cv)
    if method == "pca":
        return fit_pca_regression(X, Y, **options)
    raise InvalidInputError(f"unknown method {method!r}; expected one of {METHODS}")
