"""Dataset ingestion, normalization to degrees of truth, and synthesis.

All downstream code consumes `Dataset` objects whose cells live in
[0, 1].  Normalizers are fitted on training data only and carry enough
state to reproduce the exact transform at inference time (they are
serialized inside model files).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import boolexpr
from .errors import DataError, DomainError

MINMAX = "minmax"
ROBUST_SIGMOID = "robust_sigmoid"
NONE = "none"

NORMALIZER_KINDS = (MINMAX, ROBUST_SIGMOID, NONE)


@dataclass(frozen=True)
class RawTable:
    """Parsed but not yet normalized tabular data."""

    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    source: str = ""

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise DataError("column count does not match feature name count")
        if self.X.shape[0] != self.y.shape[0]:
            raise DataError("row count does not match label count")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix of degrees of truth in [0, 1] plus labels.

    Labels are normally binary but may be any degree of truth in [0, 1]
    (synthetic regression-style targets); operations that need strict
    0/1 labels (stratified split, classification metrics) check that
    themselves.
    """

    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise DataError("column count does not match feature name count")
        if self.X.shape[0] != self.y.shape[0]:
            raise DataError("row count does not match label count")
        if self.X.size and (self.X.min() < 0.0 or self.X.max() > 1.0):
            raise DataError("feature cells must lie in [0, 1]; normalize first")
        if self.y.size and (self.y.min() < 0.0 or self.y.max() > 1.0):
            raise DataError("labels must lie in [0, 1]")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def binary_labels(self) -> np.ndarray:
        if not np.all(np.isin(self.y, (0.0, 1.0))):
            raise DataError("operation requires strictly binary labels")
        return self.y.astype(int)


# ---------------------------------------------------------------------------
# CSV loading
# ---------------------------------------------------------------------------

def load_csv(path, label_column="label", has_header=True) -> RawTable:
    """Parse a numeric CSV with one binary label column.

    ``label_column`` is a header name, or a column index when the file
    has no header.  Raises DataError for missing files, malformed rows
    (naming the line), non-numeric cells, or unknown label columns.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file")

    if has_header:
        header = [c.strip() for c in rows[0]]
        data_rows = rows[1:]
        first_line = 2
        if isinstance(label_column, int):
            label_idx = label_column
            if not (0 <= label_idx < len(header)):
                raise DataError(f"label column index {label_column} out of range")
        else:
            try:
                label_idx = header.index(label_column)
            except ValueError:
                raise DataError(
                    f"unknown label column {label_column!r}; header is {header}"
                ) from None
        names = [h for i, h in enumerate(header) if i != label_idx]
    else:
        data_rows = rows
        first_line = 1
        if not isinstance(label_column, int):
            raise DataError("label column must be an index when there is no header")
        width = len(rows[0])
        label_idx = label_column if label_column >= 0 else width + label_column
        if not (0 <= label_idx < width):
            raise DataError(f"label column index {label_column} out of range")
        names = [f"x{i + 1}" for i in range(width) if i != label_idx]

    if not data_rows:
        raise DataError(f"{path}: no data rows")

    width = len(names) + 1
    X = np.empty((len(data_rows), len(names)), dtype=np.float64)
    y = np.empty(len(data_rows), dtype=np.float64)
    for r, row in enumerate(data_rows):
        if len(row) != width:
            raise DataError(
                f"{path}: line {first_line + r} has {len(row)} cells, expected {width}"
            )
        k = 0
        for c, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: line {first_line + r}: non-numeric cell {cell!r}"
                ) from None
            if c == label_idx:
                y[r] = value
            else:
                X[r, k] = value
                k += 1
    if not np.all(np.isin(y, (0.0, 1.0))):
        bad = y[~np.isin(y, (0.0, 1.0))][0]
        raise DataError(f"{path}: labels must be 0 or 1, found {bad!r}")
    return RawTable(tuple(names), X, y, source=str(path))


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnStats:
    """Fitted transform for one column.

    ``kind`` is minmax (a=min, b=max), robust_sigmoid (a=median,
    b=IQR/2) or constant (maps everything to 0.5).
    """

    name: str
    kind: str
    a: float = 0.0
    b: float = 1.0


@dataclass(frozen=True)
class NormalizerSpec:
    kind: str
    columns: tuple[ColumnStats, ...]
    reversed_columns: frozenset[str] = field(default_factory=frozenset)

    def to_payload(self) -> dict:
        return {
            "kind": self.kind,
            "columns": [
                {"name": c.name, "kind": c.kind, "a": c.a, "b": c.b}
                for c in self.columns
            ],
            "reversed_columns": sorted(self.reversed_columns),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "NormalizerSpec":
        cols = tuple(
            ColumnStats(c["name"], c["kind"], float(c["a"]), float(c["b"]))
            for c in payload["columns"]
        )
        return cls(payload["kind"], cols, frozenset(payload["reversed_columns"]))

    def with_reversed(self, columns) -> "NormalizerSpec":
        known = {c.name for c in self.columns}
        for name in columns:
            if name not in known:
                raise DataError(f"unknown column {name!r}")
        return replace(
            self, reversed_columns=self.reversed_columns | frozenset(columns)
        )


def fit_minmax(table: RawTable) -> NormalizerSpec:
    """Per-column (x - min) / (max - min); constant columns map to 0.5."""
    cols = []
    for j, name in enumerate(table.feature_names):
        lo = float(table.X[:, j].min())
        hi = float(table.X[:, j].max())
        if lo == hi:
            warnings.warn(f"column {name!r} is constant; mapping to 0.5")
            cols.append(ColumnStats(name, "constant"))
        else:
            cols.append(ColumnStats(name, MINMAX, lo, hi))
    return NormalizerSpec(MINMAX, tuple(cols))


def fit_robust_sigmoid(table: RawTable) -> NormalizerSpec:
    """Per-column sigmoid centred on the median, scaled by IQR/2.

    Squashes outliers toward 0/1 while stretching the middle of the
    distribution.  Columns with a degenerate IQR (fewer than 4 distinct
    values or IQR 0) fall back to minmax scaling.
    """
    cols = []
    for j, name in enumerate(table.feature_names):
        col = table.X[:, j]
        q1, med, q3 = np.percentile(col, (25, 50, 75))
        half_iqr = (q3 - q1) / 2.0
        if half_iqr > 0.0 and np.unique(col).size >= 4:
            cols.append(ColumnStats(name, ROBUST_SIGMOID, float(med), float(half_iqr)))
        else:
            lo, hi = float(col.min()), float(col.max())
            if lo == hi:
                warnings.warn(f"column {name!r} is constant; mapping to 0.5")
                cols.append(ColumnStats(name, "constant"))
            else:
                cols.append(ColumnStats(name, MINMAX, lo, hi))
    return NormalizerSpec(ROBUST_SIGMOID, tuple(cols))


def fit_none(table: RawTable) -> NormalizerSpec:
    """Passthrough for data already in [0, 1] (clips stragglers)."""
    cols = tuple(ColumnStats(name, NONE) for name in table.feature_names)
    return NormalizerSpec(NONE, cols)


def fit(table: RawTable, kind: str) -> NormalizerSpec:
    if kind == MINMAX:
        return fit_minmax(table)
    if kind == ROBUST_SIGMOID:
        return fit_robust_sigmoid(table)
    if kind == NONE:
        return fit_none(table)
    raise DataError(f"unknown normalizer kind {kind!r}")


def _transform_column(stats: ColumnStats, col: np.ndarray) -> np.ndarray:
    if stats.kind == "constant":
        return np.full_like(col, 0.5)
    if stats.kind == MINMAX:
        return np.clip((col - stats.a) / (stats.b - stats.a), 0.0, 1.0)
    if stats.kind == ROBUST_SIGMOID:
        z = (col - stats.a) / stats.b
        return 1.0 / (1.0 + np.exp(-z))
    if stats.kind == NONE:
        return np.clip(col, 0.0, 1.0)
    raise DataError(f"unknown column transform {stats.kind!r}")


def apply(spec: NormalizerSpec, table: RawTable) -> Dataset:
    """Apply a fitted normalizer; reversal (x -> 1 - x) runs last."""
    if tuple(c.name for c in spec.columns) != table.feature_names:
        raise DataError("normalizer columns do not match table columns")
    X = np.empty_like(table.X, dtype=np.float64)
    for j, stats in enumerate(spec.columns):
        X[:, j] = _transform_column(stats, table.X[:, j])
        if stats.name in spec.reversed_columns:
            X[:, j] = 1.0 - X[:, j]
    return Dataset(
        table.feature_names,
        X,
        table.y.astype(np.float64),
        provenance=f"{table.source} [{spec.kind}]",
    )


def reverse_features(dataset: Dataset, columns) -> Dataset:
    """Replace x with 1 - x on the named (already normalized) columns."""
    X = dataset.X.copy()
    for name in columns:
        try:
            j = dataset.feature_names.index(name)
        except ValueError:
            raise DataError(f"unknown column {name!r}") from None
        X[:, j] = 1.0 - X[:, j]
    return Dataset(dataset.feature_names, X, dataset.y, dataset.provenance)


# ---------------------------------------------------------------------------
# Synthetic boolean datasets
# ---------------------------------------------------------------------------

def boolean_dataset(expr_text: str, repeats: int) -> Dataset:
    """All 2**k truth-table rows of an expression, tiled ``repeats`` times."""
    if repeats < 1:
        raise DomainError("repeats must be >= 1")
    node = boolexpr.parse(expr_text)
    names = boolexpr.variables(node)
    k = len(names)
    if k > 16:
        raise DomainError(f"expression has {k} variables; at most 16 supported")
    table = boolexpr.truth_table(node)
    block_X = np.array([row for row, _ in table], dtype=np.float64)
    block_y = np.array([label for _, label in table], dtype=np.float64)
    X = np.tile(block_X, (repeats, 1))
    y = np.tile(block_y, repeats)
    return Dataset(tuple(names), X, y, provenance=f"boolean:{expr_text}")


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def _stratified_indices(y: np.ndarray, test_fraction: float, seed: int):
    if not (0.0 < test_fraction < 1.0):
        raise DomainError("test_fraction must lie strictly between 0 and 1")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise DataError("stratified split requires strictly binary labels")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for cls in (0, 1):
        members = np.flatnonzero(y == cls)
        if members.size < 2:
            raise DataError(f"class {cls} has fewer than 2 rows; cannot split")
        members = members[rng.permutation(members.size)]
        n_test = int(round(members.size * test_fraction))
        n_test = min(max(n_test, 1), members.size - 1)
        test_idx.extend(members[:n_test])
        train_idx.extend(members[n_test:])
    return np.sort(np.array(train_idx)), np.sort(np.array(test_idx))


def split(dataset: Dataset, test_fraction: float, seed: int):
    """Stratified train/test split; deterministic for a given seed."""
    train_idx, test_idx = _stratified_indices(dataset.y, test_fraction, seed)

    def take(idx):
        return Dataset(
            dataset.feature_names, dataset.X[idx], dataset.y[idx], dataset.provenance
        )

    return take(train_idx), take(test_idx)


def split_raw(table: RawTable, test_fraction: float, seed: int):
    """Stratified split of a raw table (so normalizers can fit train-only)."""
    train_idx, test_idx = _stratified_indices(table.y, test_fraction, seed)

    def take(idx):
        return RawTable(table.feature_names, table.X[idx], table.y[idx], table.source)

    return take(train_idx), take(test_idx)
