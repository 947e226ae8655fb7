"""Named seed derivation.

Every random draw in the package is keyed by a root seed plus a path of
names/integers, e.g. ``derive_seed(7, "simulate", "rep", 3)``.  Derivation is
a keyed hash, so cells can be evaluated in any order or in any process and
still see the same stream.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK63 = (1 << 63) - 1


def derive_seed(seed: int, *path) -> int:
    """Return a 63-bit integer seed for ``(seed, *path)``."""
    h = hashlib.blake2b(digest_size=8)
    h.update(repr((int(seed),) + tuple(path)).encode())
    return int.from_bytes(h.digest(), "little") & _MASK63


def rng(seed: int, *path) -> np.random.Generator:
    """A PCG64 generator for the derived seed."""
    return np.random.default_rng(derive_seed(seed, *path))


def column_normals(seed: int, n_rows: int, columns, sigma: float = 1.0) -> np.ndarray:
    """Draw an ``n_rows x len(columns)`` block of N(0, sigma^2) noise.

    Column ``j`` always comes from its own stream keyed by ``(seed, j)``, so the
    first ``m`` rows of a column do not depend on how many rows were requested.
    """
    columns = np.asarray(columns, dtype=np.int64)
    out = np.empty((n_rows, columns.size))
    root = derive_seed(seed, "columns")
    for k, j in enumerate(columns):
        g = np.random.Generator(np.random.PCG64(np.random.SeedSequence(root, spawn_key=(int(j),))))
        out[:, k] = g.standard_normal(n_rows)
    if sigma != 1.0:
        out *= sigma
    return out
