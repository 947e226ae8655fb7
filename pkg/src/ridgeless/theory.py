"""Population-level risk calculators.

The latent-factor model induces a linear working model ``y = X'beta + e``.
This module computes that ``beta``, the residual variance ``Var(e)``, and the
exact conditional squared bias and variance of the ridgeless forecast (and of
ridge/OLS on the informative block) for a given design matrix.

No p x p inverse is ever formed: the population covariance
``Sigma_X = Lambda Sigma_f Lambda' + Cov_u`` is only touched through K x K
reductions and through the reduced SVD of the design.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import dgp, seeds
from ._parallel import pmap
from .errors import InvalidInputError, NumericalError
from .linalg import DEFAULT_RCOND, ReducedSvd, reduced_svd


@dataclass(frozen=True)
class PopulationModel:
    """Second moments of the factor design.

    ``Cov_u`` is either a length-p vector (diagonal covariance) or a p x p
    symmetric positive definite matrix.
    """

    Lambda: np.ndarray
    Sigma_f: np.ndarray
    Cov_u: np.ndarray
    rho: np.ndarray
    sigma_eps2: float

    def __post_init__(self):
        Lam = np.atleast_2d(np.asarray(self.Lambda, dtype=np.float64))
        Sf = np.atleast_2d(np.asarray(self.Sigma_f, dtype=np.float64))
        Cu = np.asarray(self.Cov_u, dtype=np.float64)
        rho = np.atleast_1d(np.asarray(self.rho, dtype=np.float64))
        p, K = Lam.shape
        if Sf.shape != (K, K) or rho.shape != (K,):
            raise InvalidInputError(f"Sigma_f must be {K}x{K} and rho length {K}")
        if Cu.ndim == 0:
            Cu = np.full(p, float(Cu))
        if Cu.shape not in ((p,), (p, p)):
            raise InvalidInputError(f"Cov_u must have shape ({p},) or ({p},{p}), got {Cu.shape}")
        if Cu.ndim == 1 and np.any(Cu <= 0):
            raise NumericalError("diagonal Cov_u must be strictly positive")
        if self.sigma_eps2 < 0:
            raise InvalidInputError("sigma_eps2 must be nonnegative")
        object.__setattr__(self, "Lambda", Lam)
        object.__setattr__(self, "Sigma_f", Sf)
        object.__setattr__(self, "Cov_u", Cu)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "sigma_eps2", float(self.sigma_eps2))

    @property
    def p(self) -> int:
        return self.Lambda.shape[0]

    @property
    def K(self) -> int:
        return self.Lambda.shape[1]

    @property
    def diagonal(self) -> bool:
        return self.Cov_u.ndim == 1

    @classmethod
    def from_spec(cls, spec: dgp.FactorModelSpec) -> "PopulationModel":
        return cls(
            Lambda=dgp.loadings(spec),
            Sigma_f=np.eye(spec.K),
            Cov_u=np.full(spec.p, spec.sigma_u**2),
            rho=np.asarray(spec.rho),
            sigma_eps2=spec.sigma_eps**2,
        )

    def restrict(self, idx) -> "PopulationModel":
        """The model for the predictor subset ``idx``."""
        idx = np.asarray(idx)
        Cu = self.Cov_u[idx] if self.diagonal else self.Cov_u[np.ix_(idx, idx)]
        return PopulationModel(self.Lambda[idx], self.Sigma_f, Cu, self.rho, self.sigma_eps2)

    def cov_x(self) -> np.ndarray:
        """Explicit ``E X_t X_t'``; p x p, for small problems and tests."""
        C = self.Lambda @ self.Sigma_f @ self.Lambda.T
        if self.diagonal:
            C[np.diag_indices_from(C)] += self.Cov_u
        else:
            C = C + self.Cov_u
        return C

    def quad(self, w: np.ndarray) -> float:
        """``w' E[X_t X_t'] w``."""
        a = self.Lambda.T @ w
        if self.diagonal:
            uu = float(np.dot(w * self.Cov_u, w))
        else:
            uu = float(w @ self.Cov_u @ w)
        return float(a @ self.Sigma_f @ a) + uu

    def _cov_u_solve(self, B: np.ndarray) -> np.ndarray:
        if self.diagonal:
            return B / (self.Cov_u[:, None] if B.ndim == 2 else self.Cov_u)
        try:
            return sla.cho_solve(sla.cho_factor(self.Cov_u), B)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("Cov_u is not positive definite") from exc

    def _proj_trace_terms(self, V: np.ndarray) -> np.ndarray:
        """Diagonal of ``V' E[X_t X_t'] V`` for a p x r matrix V."""
        LV = self.Lambda.T @ V  # K x r
        fac = np.einsum("kr,kl,lr->r", LV, self.Sigma_f, LV)
        if self.diagonal:
            idio = self.Cov_u @ (V * V)
        else:
            idio = np.einsum("ir,ij,jr->r", V, self.Cov_u, V)
        return fac + idio


def induced_beta(m: PopulationModel) -> np.ndarray:
    """``Cov_u^{-1} Lambda (Sigma_f^{-1} + Lambda' Cov_u^{-1} Lambda)^{-1} rho``."""
    try:
        Sf_inv = sla.cho_solve(sla.cho_factor(m.Sigma_f), np.eye(m.K))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Sigma_f is not positive definite") from exc
    CiL = m._cov_u_solve(m.Lambda)
    inner = Sf_inv + m.Lambda.T @ CiL
    try:
        coef = np.linalg.solve(inner, m.rho)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("K x K inner system is singular") from exc
    return CiL @ coef


def induced_resid_var(m: PopulationModel, beta: np.ndarray | None = None) -> float:
    """``Var(e_t) = sigma_eps^2 + (rho - Lambda'beta)' Sigma_f (rho - Lambda'beta) + beta' Cov_u beta``."""
    if beta is None:
        beta = induced_beta(m)
    gap = m.rho - m.Lambda.T @ beta
    if m.diagonal:
        uu = float(np.dot(beta * m.Cov_u, beta))
    else:
        uu = float(beta @ m.Cov_u @ beta)
    return m.sigma_eps2 + float(gap @ m.Sigma_f @ gap) + uu


def factor_strength(m: PopulationModel) -> float:
    """Smallest eigenvalue of ``Lambda' Lambda``, used as a concrete proxy for psi."""
    return float(np.linalg.eigvalsh(m.Lambda.T @ m.Lambda)[0])


def pseudo_ols_risk(
    m: PopulationModel,
    X,
    sigma_e2: float | None = None,
    beta: np.ndarray | None = None,
    svd: ReducedSvd | None = None,
    rcond: float = DEFAULT_RCOND,
):
    """Conditional squared bias and variance of the ridgeless forecast.

    bias^2   = beta' A_X Sigma_X A_X beta,  A_X = (X'X)^+ X'X - I
    variance = sigma_e^2 tr[(X'X)^+ Sigma_X]

    ``A_X beta`` is minus the projection of beta onto the null space of X, so
    only the row-space basis from the reduced SVD is needed.  ``sigma_e2``
    defaults to :func:`induced_resid_var`.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.p:
        raise InvalidInputError(f"design must have {m.p} columns, got shape {X.shape}")
    if beta is None:
        beta = induced_beta(m)
    if sigma_e2 is None:
        sigma_e2 = induced_resid_var(m, beta)
    if svd is None:
        svd = reduced_svd(X, rcond)
    V, s = svd.right, svd.singular_values
    if svd.rank == m.p:
        bias2 = 0.0  # full column rank: A_X = 0
    else:
        bias2 = m.quad(beta - V @ (V.T @ beta))
    variance = sigma_e2 * float(np.sum(m._proj_trace_terms(V) / s**2))
    return bias2, variance


def pseudo_ols_bias2_from_null_basis(m: PopulationModel, beta: np.ndarray, null_basis: np.ndarray) -> float:
    """Same squared bias as :func:`pseudo_ols_risk` but built from ``A_X = -N N'``."""
    w = null_basis @ (null_basis.T @ beta)
    return m.quad(w)


def ridge_restricted_risk(
    m_I: PopulationModel,
    X_I,
    lam: float,
    sigma_e2: float | None = None,
    rcond: float = DEFAULT_RCOND,
):
    """Squared bias and variance of ridge (OLS at ``lam = 0``) on a predictor block.

    bias^2   = beta_I' A_I Sigma_I A_I beta_I,  A_I = (X_I'X_I + lam I)^{-1} X_I'X_I - I
    variance = sigma_e^2 tr[Sigma_I (X_I'X_I + lam I)^{-1} X_I'X_I (X_I'X_I + lam I)^{-1}]
    """
    X_I = np.asarray(X_I, dtype=np.float64)
    if X_I.ndim != 2 or X_I.shape[1] != m_I.p:
        raise InvalidInputError(f"design must have {m_I.p} columns, got shape {X_I.shape}")
    lam = float(lam)
    if not lam >= 0:
        raise InvalidInputError(f"lam must be >= 0, got {lam}")
    beta = induced_beta(m_I)
    if sigma_e2 is None:
        sigma_e2 = induced_resid_var(m_I, beta)
    svd = reduced_svd(X_I, rcond)
    V, s = svd.right, svd.singular_values
    s2 = s**2
    if lam == 0.0 and svd.rank < m_I.p:
        raise NumericalError(f"X_I has rank {svd.rank} < {m_I.p}; OLS risk undefined")
    if math.isinf(lam):
        return m_I.quad(beta), 0.0
    if lam == 0.0:
        bias2 = 0.0
    else:
        Vb = V.T @ beta
        # -A_I beta = (I - VV')beta + V diag(lam / (s^2 + lam)) V'beta
        bias2 = m_I.quad(beta - V @ Vb + V @ (lam / (s2 + lam) * Vb))
    variance = sigma_e2 * float(np.sum(m_I._proj_trace_terms(V) * s2 / (s2 + lam) ** 2))
    return bias2, variance


# -- risk curves ---------------------------------------------------------------

REGIMES = ("p<n", "p=n", "p>n")


def regime(p: int, n: int) -> str:
    return "p<n" if p < n else ("p=n" if p == n else "p>n")


@dataclass
class RiskPoint:
    p: int
    bias2: float
    variance: float
    mse: float
    regime: str
    resid_var: float
    bias2_se: float = 0.0
    variance_se: float = 0.0
    replications: int = 0


@dataclass
class RiskCurve:
    points: list = field(default_factory=list)
    n: int = 0
    sigma_eps2: float = float("nan")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(pt, name) for pt in self.points])

    def at(self, p: int) -> RiskPoint:
        for pt in self.points:
            if pt.p == p:
                return pt
        raise KeyError(p)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "bias2", "variance", "mse", "regime"])
        for pt in self.points:
            w.writerow([pt.p, repr(pt.bias2), repr(pt.variance), repr(pt.mse), pt.regime])
        return buf.getvalue()


def spec_at(spec: dgp.FactorModelSpec, p: int) -> dgp.FactorModelSpec:
    """The design with ``p`` predictors, the first ``min(p, spec.p0)`` informative."""
    return spec.with_(p=int(p), p0=min(int(p), spec.p0))


def _risk_cell(args):
    spec, p, replications, seed = args
    sp = spec_at(spec, p)
    m = PopulationModel.from_spec(sp)
    beta = induced_beta(m)
    ev = induced_resid_var(m, beta)
    b = np.empty(replications)
    v = np.empty(replications)
    for r in range(replications):
        # one design stream per replication, shared across p (nested columns)
        X = dgp.draw_sample(sp.with_(noise_seed=seeds.derive_seed(seed, "risk", r))).X
        b[r], v[r] = pseudo_ols_risk(m, X, sigma_e2=ev, beta=beta)
    return p, b, v, ev


def risk_curve(
    spec: dgp.FactorModelSpec,
    p_grid,
    replications: int,
    seed: int = 0,
    workers: int | None = 1,
) -> RiskCurve:
    """Design-averaged bias^2, variance and MSE of the ridgeless forecast along ``p_grid``.

    At each ``p`` the first ``min(p, spec.p0)`` predictors are informative and
    the remaining ones are pure noise; ``spec.n`` sets the sample size.
    ``mse = bias2 + variance + Var(e_t)``.
    """
    p_grid = [int(p) for p in p_grid]
    if not p_grid:
        raise InvalidInputError("p_grid must be nonempty")
    if any(b <= a for a, b in zip(p_grid, p_grid[1:])):
        raise InvalidInputError("p_grid must be strictly ascending")
    if p_grid[0] < spec.K:
        raise InvalidInputError(f"p must be at least K={spec.K}")
    if replications < 1:
        raise InvalidInputError("replications must be >= 1")
    cells = pmap(_risk_cell, [(spec, p, replications, seed) for p in p_grid], workers)
    curve = RiskCurve(n=spec.n, sigma_eps2=spec.sigma_eps**2)
    root = math.sqrt(replications)
    for p, b, v, ev in cells:
        bias2 = math.fsum(b) / replications
        var = math.fsum(v) / replications
        curve.points.append(
            RiskPoint(
                p=p,
                bias2=bias2,
                variance=var,
                mse=bias2 + var + ev,
                regime=regime(p, spec.n),
                resid_var=ev,
                bias2_se=float(np.std(b, ddof=1) / root) if replications > 1 else 0.0,
                variance_se=float(np.std(v, ddof=1) / root) if replications > 1 else 0.0,
                replications=replications,
            )
        )
    return curve
