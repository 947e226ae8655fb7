"""Synthetic data from the latent-factor design.

    y_t    = rho' f_t + eps_t
    x_it   = lambda_i' f_t + u_it      i <= p0
    x_it   = u_it                      i >  p0
    lambda_i = lambda_i0 * p0 ** (-tau)

All primitives are standard normal; ``sigma_eps`` and ``sigma_u`` only scale.
Loadings depend on ``loading_seed`` alone and stay fixed across replications.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import seeds
from .errors import InvalidInputError

SPEC_KEYS = ("n", "p", "p0", "K", "tau", "rho", "sigma_eps", "sigma_u", "loading_seed", "noise_seed")


@dataclass(frozen=True)
class FactorModelSpec:
    n: int
    p: int
    p0: int
    K: int = 3
    tau: float = 0.0
    rho: tuple = field(default=None)
    sigma_eps: float = 1.0
    sigma_u: float = 1.0
    loading_seed: int = 0
    noise_seed: int = 1

    def __post_init__(self):
        rho = self.rho
        if rho is None:
            rho = (1.0,) * int(self.K)
        object.__setattr__(self, "rho", tuple(float(r) for r in np.atleast_1d(rho)))
        self.validate()

    def validate(self):
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise InvalidInputError(f"n must be a positive integer, got {self.n!r}")
        if not 1 <= self.K <= self.p0 <= self.p:
            raise InvalidInputError(
                f"need 1 <= K <= p0 <= p, got K={self.K}, p0={self.p0}, p={self.p}"
            )
        if not 0.0 <= self.tau <= 0.5:
            raise InvalidInputError(f"tau must lie in [0, 1/2], got {self.tau}")
        if len(self.rho) != self.K:
            raise InvalidInputError(f"rho has length {len(self.rho)}, expected K={self.K}")
        if not (self.sigma_eps > 0 and self.sigma_u > 0):
            raise InvalidInputError("sigma_eps and sigma_u must be positive")

    def with_(self, **changes) -> "FactorModelSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rho"] = list(self.rho)
        return {k: d[k] for k in SPEC_KEYS}

    @classmethod
    def from_dict(cls, d: dict) -> "FactorModelSpec":
        unknown = set(d) - set(SPEC_KEYS)
        if unknown:
            raise InvalidInputError(f"unknown model keys: {sorted(unknown)}")
        missing = {"n", "p", "p0"} - set(d)
        if missing:
            raise InvalidInputError(f"missing model keys: {sorted(missing)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FactorModelSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class SimulatedSample:
    X: np.ndarray
    y: np.ndarray
    F: np.ndarray
    Lambda: np.ndarray
    U: np.ndarray


def base_loadings(spec: FactorModelSpec) -> np.ndarray:
    """Unscaled draws lambda_i0 for the informative rows (p0 x K).

    Row ``i`` does not depend on ``p0``: a larger ``p0`` only appends rows.
    """
    g = seeds.rng(spec.loading_seed, "loadings", spec.K)
    return g.standard_normal((spec.p0, spec.K))


def loadings(spec: FactorModelSpec) -> np.ndarray:
    """Full p x K loading matrix; rows beyond p0 are zero."""
    Lam = np.zeros((spec.p, spec.K))
    Lam[: spec.p0] = base_loadings(spec) * spec.p0 ** (-spec.tau)
    return Lam


def _draw(spec: FactorModelSpec, Lam: np.ndarray, count: int, seed: int, stream: str):
    # idiosyncratic noise is drawn per column, so X[:, :m] does not depend on p
    g = seeds.rng(seed, stream)
    F = g.standard_normal((count, spec.K))
    eps = g.standard_normal(count)
    U = seeds.column_normals(seeds.derive_seed(seed, stream, "u"), count, np.arange(spec.p), spec.sigma_u)
    X = F @ Lam.T + U
    y = F @ np.asarray(spec.rho) + spec.sigma_eps * eps
    return X, y, F, U


def draw_sample(spec: FactorModelSpec) -> SimulatedSample:
    """In-sample draw of ``spec.n`` rows under ``spec.noise_seed``."""
    spec.validate()
    Lam = loadings(spec)
    X, y, F, U = _draw(spec, Lam, spec.n, spec.noise_seed, "sample")
    return SimulatedSample(X=X, y=y, F=F, Lambda=Lam, U=U)


def draw_oos(spec: FactorModelSpec, count: int, seed: int):
    """Out-of-sample rows from the same design (same loadings).

    Returns ``(X_new, y_new, F_new)``.  The stream is keyed apart from
    :func:`draw_sample`, so reusing a seed value does not reuse draws.
    """
    spec.validate()
    if count < 0:
        raise InvalidInputError(f"count must be >= 0, got {count}")
    Lam = loadings(spec)
    X, y, F, _ = _draw(spec, Lam, int(count), seed, "oos")
    return X, y, F


def augment_with_noise(X, extra: int, sigma: float = 1.0, seed: int = 0, first_column: int = 0) -> np.ndarray:
    """Append ``extra`` columns of i.i.d. N(0, sigma^2) noise to ``X``.

    Each appended column is its own stream (keyed by ``seed`` and the column
    number ``first_column + j``), so augmenting and then keeping the first ``m``
    rows equals augmenting the first ``m`` rows.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError("X must be 2-D")
    extra = int(extra)
    if extra < 0:
        raise InvalidInputError(f"extra must be >= 0, got {extra}")
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    if extra == 0:
        return X
    noise = seeds.column_normals(seed, X.shape[0], np.arange(first_column, first_column + extra), sigma)
    return np.hstack([X, noise])
