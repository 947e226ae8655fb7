"""CSV datasets for the forecasting protocols.

A :class:`Dataset` holds a finite feature matrix, a target vector, a row index
and a log of every step applied since loading.  Transforms are plain dicts
(``{"op": "lag", "k": 1}``) or short strings (``"lag(1)"``), and replaying a
dataset's log on the loaded data reproduces it exactly.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

_DECIMAL = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")
TRANSFORM_OPS = ("lag", "pct_change", "standardize", "demean", "select", "drop_na")


@dataclass(frozen=True)
class Dataset:
    columns: tuple
    target: str
    X: np.ndarray
    y: np.ndarray
    index: tuple
    index_name: str | None = None
    log: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise DataError("column names must be unique")
        if self.X.shape != (len(self.index), len(self.columns)) or self.y.shape != (len(self.index),):
            raise DataError("dataset arrays do not match the index and column names")

    @property
    def n(self) -> int:
        return len(self.index)

    @property
    def p(self) -> int:
        return len(self.columns)

    def rows(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(self, X=self.X[idx], y=self.y[idx], index=tuple(self.index[i] for i in idx))

    @classmethod
    def from_arrays(cls, X, y, columns=None, target="y", index=None) -> "Dataset":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        if X.ndim != 2 or X.shape[0] != y.size:
            raise DataError(f"X shape {X.shape} does not match y length {y.size}")
        columns = tuple(columns) if columns is not None else tuple(f"x{j + 1}" for j in range(X.shape[1]))
        index = tuple(str(i) for i in (index if index is not None else range(y.size)))
        return cls(columns, target, X, y, index)


def _parse_cell(text: str, row: int, col: str) -> float:
    s = text.strip()
    if s == "":
        return np.nan
    if not _DECIMAL.match(s):
        raise DataError(f"row {row}, column {col!r}: cannot parse {text!r} as a decimal number")
    return float(s)


def load_csv(path, target: str, index: str | None = None) -> Dataset:
    """Read a headed CSV; every column other than ``target`` and ``index`` is a feature.

    Empty cells are missing.  Rows with a missing target, then rows with a
    missing feature, are dropped and logged.  Row numbers in error messages
    count the header as row 1.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise DataError(f"duplicate column names: {dupes}")
    if target not in header:
        raise DataError(f"target column {target!r} not found in {header}")
    if index is not None and index not in header:
        raise DataError(f"index column {index!r} not found in {header}")
    if index == target:
        raise DataError("index and target must be different columns")
    features = [h for h in header if h not in (target, index)]
    ti = header.index(target)
    ii = header.index(index) if index is not None else None
    fi = [header.index(h) for h in features]

    labels, yv, Xv = [], [], []
    for r, raw in enumerate(rows[1:], start=2):
        if not raw or all(c.strip() == "" for c in raw):
            continue
        if len(raw) != len(header):
            raise DataError(f"row {r} has {len(raw)} cells, header has {len(header)}")
        labels.append(raw[ii].strip() if ii is not None else str(len(labels)))
        yv.append(_parse_cell(raw[ti], r, target))
        Xv.append([_parse_cell(raw[j], r, header[j]) for j in fi])
    y = np.array(yv, dtype=np.float64)
    X = np.array(Xv, dtype=np.float64).reshape(len(yv), len(features))

    no_target = ~np.isfinite(y)
    no_feature = ~no_target & ~np.all(np.isfinite(X), axis=1)
    keep = ~(no_target | no_feature)
    entry = {
        "op": "load",
        "path": str(path),
        "rows_read": int(y.size),
        "dropped_missing_target": [labels[i] for i in np.flatnonzero(no_target)],
        "dropped_missing_feature": [labels[i] for i in np.flatnonzero(no_feature)],
    }
    if no_target.any() or no_feature.any():
        log.info("%s: dropped %d rows with missing target and %d with missing features",
                 path, int(no_target.sum()), int(no_feature.sum()))
    return Dataset(
        tuple(features), target, X[keep], y[keep],
        tuple(l for l, k in zip(labels, keep) if k), index, (entry,),
    )


# -- transforms ------------------------------------------------------------------


def parse_transform(step) -> dict:
    """Normalize ``"lag(2)"``, ``"select(a,b)"``, ``"standardize"`` or a dict."""
    if isinstance(step, dict):
        d = dict(step)
    else:
        m = re.fullmatch(r"\s*(\w+)\s*(?:\((.*)\))?\s*", str(step))
        if not m:
            raise DataError(f"cannot parse transform {step!r}")
        d = {"op": m.group(1)}
        arg = m.group(2)
        if arg is not None and arg.strip():
            if d["op"] == "lag":
                d["k"] = int(arg)
            else:
                d["columns"] = [a.strip() for a in arg.split(",")]
    if d.get("op") not in TRANSFORM_OPS:
        raise DataError(f"unknown transform {d.get('op')!r}; expected one of {TRANSFORM_OPS}")
    return d


def _feature_idx(d: Dataset, cols):
    missing = [c for c in cols if c not in d.columns]
    if missing:
        raise DataError(f"unknown columns {missing}")
    return [d.columns.index(c) for c in cols]


def _apply_one(d: Dataset, step: dict) -> tuple[Dataset, dict]:
    op = step["op"]
    info = {}
    if op == "lag":
        k = int(step.get("k", 1))
        if k < 1 or k >= d.n:
            raise DataError(f"lag {k} needs 1 <= k < {d.n} rows")
        # features observed at t forecast the target at t + k
        out = replace(d, X=d.X[:-k], y=d.y[k:], index=d.index[k:])
    elif op == "pct_change":
        cols = step.get("columns") or list(d.columns)
        X, y = d.X.copy(), d.y.copy()
        for c in cols:
            if c == d.target:
                prev, cur = y[:-1], y[1:]
            else:
                j = _feature_idx(d, [c])[0]
                prev, cur = X[:-1, j], X[1:, j]
            if np.any(prev == 0):
                raise DataError(f"pct_change on column {c!r} divides by zero")
            ch = cur / prev - 1.0
            if c == d.target:
                y[1:] = ch
            else:
                X[1:, j] = ch
        out = replace(d, X=X[1:], y=y[1:], index=d.index[1:])
        info["columns"] = cols
    elif op in ("standardize", "demean"):
        cols = step.get("columns") or list(d.columns)
        idx = _feature_idx(d, cols)
        X = d.X.copy()
        for c, j in zip(cols, idx):
            col = X[:, j]
            mu = col.mean()
            col = col - mu
            if op == "standardize":
                sd = np.sqrt(np.mean(col * col))
                if not sd > 0:
                    raise DataError(f"cannot standardize constant column {c!r}")
                col = col / sd
            X[:, j] = col
        out = replace(d, X=X)
        info["columns"] = cols
    elif op == "select":
        cols = step.get("columns")
        if not cols:
            raise DataError("select needs a nonempty column list")
        idx = _feature_idx(d, cols)
        out = replace(d, columns=tuple(cols), X=d.X[:, idx])
    else:  # drop_na
        keep = np.isfinite(d.y) & np.all(np.isfinite(d.X), axis=1)
        out = d.rows(np.flatnonzero(keep))
        info["dropped"] = [d.index[i] for i in np.flatnonzero(~keep)]
    entry = {**step, **info, "rows_before": d.n, "rows_after": out.n}
    log.info("transform %s: %d -> %d rows", op, d.n, out.n)
    return replace(out, log=d.log + (entry,)), entry


def apply_transforms(d: Dataset, spec) -> Dataset:
    """Apply an ordered list of transforms, appending each to the log."""
    for step in spec:
        d, _ = _apply_one(d, parse_transform(step))
    return d


def replay(raw: Dataset, log_entries) -> Dataset:
    """Re-apply the transform entries of a log (load entries are skipped)."""
    steps = []
    for e in log_entries:
        if e["op"] == "load":
            continue
        s = {"op": e["op"]}
        if "k" in e:
            s["k"] = e["k"]
        if "columns" in e:
            s["columns"] = e["columns"]
        steps.append(s)
    return apply_transforms(raw, steps)


def save_csv(d: Dataset, path) -> Path:
    """Write the dataset as CSV (full float precision) plus a ``.json`` sidecar."""
    path = Path(path)
    idx_name = d.index_name or "index"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([idx_name, d.target, *d.columns])
        for i in range(d.n):
            w.writerow([d.index[i], repr(float(d.y[i])), *(repr(float(v)) for v in d.X[i])])
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps(
        {"target": d.target, "index": idx_name, "columns": list(d.columns), "log": list(d.log)},
        indent=2, sort_keys=True,
    ))
    return side
