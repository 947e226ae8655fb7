"""Coordinate-descent kernel for the Lasso path (numba)."""

from __future__ import annotations

import numpy as np
from numba import njit

# active-set sweeps between sign-fixed Newton steps
_NEWTON_EVERY = 10


@njit(cache=True)
def _sweep(X, col_sq, b, r, lam, idx, n_idx):
    n = X.shape[0]
    inv_n = 1.0 / n
    max_delta = 0.0
    for k in range(n_idx):
        j = idx[k]
        if col_sq[j] == 0.0:
            continue
        bj = b[j]
        g = 0.0
        for i in range(n):
            g += X[i, j] * r[i]
        z = g * inv_n + col_sq[j] * bj
        if z > lam:
            new = (z - lam) / col_sq[j]
        elif z < -lam:
            new = (z + lam) / col_sq[j]
        else:
            new = 0.0
        d = new - bj
        if d != 0.0:
            for i in range(n):
                r[i] -= X[i, j] * d
            b[j] = new
            if abs(d) > max_delta:
                max_delta = abs(d)
    return max_delta


@njit(cache=True)
def _face_step(X, y, b, r, lam, nz, m):
    """One step on the sign pattern of ``b[nz[:m]]``; returns the index that hit zero or -1.

    On that pattern the objective is the quadratic (1/2) b'Gb - g'b.  A
    gradient component in the null space of G is a direction of linear
    decrease and is followed first; otherwise the step is the pseudo-inverse
    Newton step.  Either is cut where the first coefficient would change
    sign, so the objective never increases.  Returns -2 if no step is taken.
    """
    n = X.shape[0]
    XA = np.empty((n, m))
    s = np.empty(m)
    bA = np.empty(m)
    for k in range(m):
        XA[:, k] = X[:, nz[k]]
        bA[k] = b[nz[k]]
        s[k] = 1.0 if bA[k] > 0 else -1.0
    G = XA.T @ XA / n
    grad = XA.T @ r / n - lam * s  # minus the gradient at bA
    w, Q = np.linalg.eigh(G)
    cut = 1e-10 * max(w[-1], 1e-300)
    c = Q.T @ grad
    null = np.zeros(m)
    step = np.zeros(m)
    for i in range(m):
        if w[i] <= cut:
            null[i] = c[i]
        else:
            step[i] = c[i] / w[i]
    if np.sqrt(np.sum(null * null)) > 1e-12 * (np.sqrt(np.sum(grad * grad)) + 1e-300):
        d = Q @ null
        t = np.inf
    else:
        d = Q @ step
        t = 1.0
    hit = -1
    for k in range(m):
        if d[k] * s[k] < 0.0:
            tk = -bA[k] / d[k]
            if tk < t:
                t = tk
                hit = k
    if not np.isfinite(t) or t <= 0.0:
        return -2
    for k in range(m):
        bA[k] += t * d[k]
    if hit >= 0:
        bA[hit] = 0.0
    for k in range(m):
        b[nz[k]] = bA[k]
    res = y - XA @ bA
    for i in range(n):
        r[i] = res[i]
    return hit


@njit(cache=True)
def _newton(X, y, b, r, lam, active, na):
    """Minimize over the nonzero coefficients with their signs held.

    Repeats :func:`_face_step`, dropping each coefficient that reaches zero,
    until a step lands inside the sign pattern.  Sweeps decide convergence.
    """
    nz = np.empty(na, dtype=np.int64)
    m = 0
    for k in range(na):
        if b[active[k]] != 0.0:
            nz[m] = active[k]
            m += 1
    while m > 0:
        hit = _face_step(X, y, b, r, lam, nz, m)
        if hit < 0:
            return
        nz[hit] = nz[m - 1]
        m -= 1


@njit(cache=True)
def lasso_path(X, y, lambdas, tol, max_sweeps, b0):
    """Solve (1/2n)||y - Xb||^2 + lam ||b||_1 for each lam (warm-started).

    ``X`` should be Fortran-ordered.  Returns ``(coefs, sweeps, failed_at)``;
    ``failed_at`` is -1 on success, else the index of the penalty whose solve
    hit ``max_sweeps`` (``coefs[failed_at]`` then holds the last iterate).
    A solve has converged when a sweep over all coordinates changes no
    coefficient by ``tol`` or more.
    """
    n, p = X.shape
    m = lambdas.shape[0]
    col_sq = np.empty(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += X[i, j] * X[i, j]
        col_sq[j] = s / n
    b = b0.copy()
    r = y - X @ b
    coefs = np.zeros((m, p))
    sweeps = np.zeros(m, dtype=np.int64)
    all_idx = np.arange(p)
    active = np.empty(p, dtype=np.int64)
    for k in range(m):
        lam = lambdas[k]
        total = 0
        converged = False
        while True:
            delta = _sweep(X, col_sq, b, r, lam, all_idx, p)
            total += 1
            if delta < tol:
                converged = True
                break
            if total >= max_sweeps:
                break
            # iterate on the active set until it settles, then re-check all
            na = 0
            for j in range(p):
                if b[j] != 0.0:
                    active[na] = j
                    na += 1
            inner = 0
            while total < max_sweeps:
                delta = _sweep(X, col_sq, b, r, lam, active, na)
                total += 1
                inner += 1
                if delta < tol:
                    break
                if inner % _NEWTON_EVERY == 0:
                    _newton(X, y, b, r, lam, active, na)
            if total >= max_sweeps:
                break
        coefs[k] = b
        sweeps[k] = total
        if not converged:
            return coefs, sweeps, k
    return coefs, sweeps, -1
