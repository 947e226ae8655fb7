"""Dense linear-algebra kernel.

Reduced SVD, minimum-norm least squares (the ridgeless / pseudo-OLS solve),
ridge solves and symmetric eigendecomposition.  Everything here is a pure
function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, NumericalError

DEFAULT_RCOND = 1e-10

# Gram-route acceptance: every eigenvalue of the small Gram matrix must exceed
# this fraction of the largest one, otherwise LAPACK SVD is used.
_GRAM_MIN_RATIO = 1e-6


@dataclass(frozen=True)
class ReducedSvd:
    """``X = left @ diag(singular_values) @ right.T`` restricted to the numerical rank."""

    left: np.ndarray  # n x r
    singular_values: np.ndarray  # r, descending, > 0
    right: np.ndarray  # p x r

    @property
    def rank(self) -> int:
        return int(self.singular_values.size)

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


def _as_matrix(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise InvalidInputError(f"{name} must be a nonempty 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return X


def _check_rcond(rcond: float) -> float:
    rcond = float(rcond)
    if not 0.0 <= rcond < 1.0:
        raise InvalidInputError(f"relative cutoff must lie in [0, 1), got {rcond}")
    return rcond


def _svd_lapack(X):
    try:
        return sla.svd(X, full_matrices=False, check_finite=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        pass
    try:
        return sla.svd(X, full_matrices=False, check_finite=False, lapack_driver="gesvd")
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc


def _svd_gram(X):
    """SVD through the eigendecomposition of the smaller Gram matrix.

    Returns None when the Gram matrix is too ill-conditioned for the squared
    condition number to be harmless.
    """
    n, p = X.shape
    wide = p >= n
    G = X @ X.T if wide else X.T @ X
    w, Q = np.linalg.eigh(G)
    w = w[::-1]
    if w[0] <= 0.0 or w[-1] < _GRAM_MIN_RATIO * w[0]:
        return None
    Q = Q[:, ::-1]
    s = np.sqrt(w)
    if wide:
        return Q, s, (X.T @ Q) / s
    return (X @ Q) / s, s, Q


def reduced_svd(X, rcond: float = DEFAULT_RCOND, method: str = "auto") -> ReducedSvd:
    """Reduced SVD of ``X`` truncated at ``rcond * sigma_max``.

    Parameters
    ----------
    X : (n, p) array_like
    rcond : float
        Singular values ``<= rcond * sigma_max`` are treated as zero.
    method : {"auto", "lapack", "gram"}
        ``"auto"`` takes the eigendecomposition of the ``min(n, p)`` Gram
        matrix when it is well conditioned (much faster for very wide X) and
        falls back to LAPACK otherwise.  ``"gram"`` forces that route.
    """
    X = _as_matrix(X)
    rcond = _check_rcond(rcond)
    out = None
    if method in ("auto", "gram"):
        out = _svd_gram(X)
        if out is None and method == "gram":
            raise NumericalError("Gram matrix too ill-conditioned for the gram route")
    elif method != "lapack":
        raise InvalidInputError(f"unknown SVD method {method!r}")
    if out is None:
        U, s, Vt = _svd_lapack(X)
        out = (U, s, Vt.T)
    U, s, V = out
    if s.size == 0 or s[0] == 0.0:
        r = 0
    else:
        r = int(np.count_nonzero(s > rcond * s[0]))
    return ReducedSvd(np.ascontiguousarray(U[:, :r]), s[:r].copy(), np.ascontiguousarray(V[:, :r]))


def min_norm_solve(X, Y, rcond: float = DEFAULT_RCOND, svd: ReducedSvd | None = None) -> np.ndarray:
    """Minimum-norm least-squares solution ``(X'X)^+ X'Y = V S^{-1} U'Y``.

    ``Y`` may be a vector or an ``n x m`` matrix of right-hand sides.  A
    precomputed ``svd`` of ``X`` can be passed to skip the decomposition.
    """
    X = _as_matrix(X)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] != X.shape[0]:
        raise InvalidInputError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    if not np.all(np.isfinite(Y)):
        raise InvalidInputError("Y contains non-finite entries")
    if svd is None:
        svd = reduced_svd(X, rcond)
    coef = svd.left.T @ Y
    if coef.ndim == 1:
        coef = coef / svd.singular_values
    else:
        coef = coef / svd.singular_values[:, None]
    return svd.right @ coef


def pinv_gram(X, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """``(X'X)^+`` as an explicit p x p matrix.  Only meant for small checks."""
    svd = reduced_svd(X, rcond)
    return (svd.right / svd.singular_values**2) @ svd.right.T


def null_space(X, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Orthonormal basis (p x (p - r)) of the null space of ``X``."""
    X = _as_matrix(X)
    return sla.null_space(X, rcond=rcond)


def ridge_solve(X, Y, lam: float) -> np.ndarray:
    """``(X'X + lam I)^{-1} X'Y``.

    ``lam = 0`` is only accepted for designs of full column rank; use
    :func:`min_norm_solve` for the ridgeless limit.
    """
    X = _as_matrix(X)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] != X.shape[0]:
        raise InvalidInputError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    lam = float(lam)
    if not lam >= 0.0:
        raise InvalidInputError(f"ridge penalty must be >= 0, got {lam}")
    n, p = X.shape
    if lam == 0.0:
        svd = reduced_svd(X, method="lapack")
        if svd.rank < p:
            raise NumericalError(f"X'X is singular (rank {svd.rank} < {p}); ridge needs lam > 0")
        return min_norm_solve(X, Y, svd=svd)
    try:
        if p <= n:
            A = X.T @ X
            A[np.diag_indices_from(A)] += lam
            return sla.cho_solve(sla.cho_factor(A, check_finite=False), X.T @ Y, check_finite=False)
        # dual form: X'(XX' + lam I)^{-1} Y
        B = X @ X.T
        B[np.diag_indices_from(B)] += lam
        return X.T @ sla.cho_solve(sla.cho_factor(B, check_finite=False), Y, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"ridge system not positive definite: {exc}") from exc


def sym_eig(A, sym_tol: float = 1e-10):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns ``(values, vectors)`` with ``A @ vectors[:, j] = values[j] * vectors[:, j]``.
    """
    A = _as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"A must be square, got {A.shape}")
    scale = np.max(np.abs(A))
    if np.max(np.abs(A - A.T)) > sym_tol * max(scale, np.finfo(float).tiny):
        raise InvalidInputError("A is not symmetric")
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    return w[::-1].copy(), V[:, ::-1].copy()
