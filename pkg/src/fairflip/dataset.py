"""Tabular dataset container, CSV ingestion, and train/test splitting.

The dataset is the currency of every other module: a feature matrix, binary
labels, and a binary protected attribute (1 = minority). All containers are
immutable after construction; every operation returns fresh copies.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TabularDataset",
    "DatasetSchema",
    "SchemaError",
    "RowParseError",
    "EmptyInputError",
    "load_csv",
    "split",
]


class SchemaError(ValueError):
    """A schema/CSV mismatch: missing column, bad attribute level, etc."""


class RowParseError(ValueError):
    """A cell could not be parsed; carries the offending row index."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class EmptyInputError(ValueError):
    """The input file has no data rows."""


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TabularDataset:
    """Feature matrix with binary labels and a binary protected attribute.

    Convention: attribute == 1 marks the minority/protected group everywhere
    in this package. Labels are stored as {0, 1}; learners that want a signed
    view convert on the fly.
    """

    features: np.ndarray
    labels: np.ndarray
    attribute: np.ndarray
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labs = np.asarray(self.labels)
        attr = np.asarray(self.attribute)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        n = feats.shape[0]
        if n < 1:
            raise ValueError("dataset must contain at least one row")
        if labs.shape != (n,) or attr.shape != (n,):
            raise ValueError(
                f"length mismatch: {n} feature rows, {labs.shape} labels, {attr.shape} attribute"
            )
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain NaN or Inf")
        for name, vec in (("labels", labs), ("attribute", attr)):
            if not np.all(np.isin(vec, (0, 1))):
                bad = sorted(set(np.unique(vec)) - {0, 1})
                raise ValueError(f"{name} must be 0/1, found {bad}")
        if self.column_names is not None and len(self.column_names) != feats.shape[1]:
            raise ValueError("column_names length must match feature dimension")
        object.__setattr__(self, "features", _as_readonly(feats))
        object.__setattr__(self, "labels", _as_readonly(labs.astype(np.int64)))
        object.__setattr__(self, "attribute", _as_readonly(attr.astype(np.int64)))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def minority_indices(self) -> np.ndarray:
        return np.flatnonzero(self.attribute == 1)

    def majority_indices(self) -> np.ndarray:
        return np.flatnonzero(self.attribute == 0)

    def take(self, indices: np.ndarray) -> "TabularDataset":
        """Row subset (copy), preserving order of ``indices``."""
        idx = np.asarray(indices, dtype=np.int64)
        return TabularDataset(
            self.features[idx], self.labels[idx], self.attribute[idx], self.column_names
        )

    def with_labels(self, labels: np.ndarray) -> "TabularDataset":
        """Copy of the dataset with ``labels`` substituted."""
        return TabularDataset(self.features, labels, self.attribute, self.column_names)


@dataclass(frozen=True)
class DatasetSchema:
    """How to read a CSV into a TabularDataset.

    ``positive_label_value`` maps to label 1 (anything else to 0);
    ``protected_value`` maps to attribute 1 and the attribute column must
    contain exactly one other level. Categorical columns are one-hot encoded
    with one indicator per observed level (no reference level dropped),
    levels ordered lexicographically for determinism.
    """

    label_column: str
    positive_label_value: str
    attribute_column: str
    protected_value: str
    drop_columns: tuple[str, ...] = ()
    categorical_columns: tuple[str, ...] = ()
    feature_columns: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.label_column == self.attribute_column:
            raise SchemaError("label_column and attribute_column must differ")
        object.__setattr__(self, "drop_columns", tuple(self.drop_columns))
        object.__setattr__(self, "categorical_columns", tuple(self.categorical_columns))
        if self.feature_columns is not None:
            object.__setattr__(self, "feature_columns", tuple(self.feature_columns))

    @classmethod
    def from_json(cls, text: str) -> "DatasetSchema":
        raw = json.loads(text)
        return cls(
            label_column=raw["label_column"],
            positive_label_value=str(raw["positive_label_value"]),
            attribute_column=raw["attribute_column"],
            protected_value=str(raw["protected_value"]),
            drop_columns=tuple(raw.get("drop_columns", ())),
            categorical_columns=tuple(raw.get("categorical_columns", ())),
            feature_columns=tuple(raw["feature_columns"]) if "feature_columns" in raw else None,
        )

    def to_json(self) -> str:
        out = {
            "label_column": self.label_column,
            "positive_label_value": self.positive_label_value,
            "attribute_column": self.attribute_column,
            "protected_value": self.protected_value,
            "drop_columns": list(self.drop_columns),
            "categorical_columns": list(self.categorical_columns),
        }
        if self.feature_columns is not None:
            out["feature_columns"] = list(self.feature_columns)
        return json.dumps(out, sort_keys=True)


def load_csv(path: str, schema: DatasetSchema) -> TabularDataset:
    """Read an RFC 4180 CSV (header required, UTF-8) into a TabularDataset.

    Missing values are rejected, not imputed: an empty cell in any used
    column raises RowParseError. Row order is preserved.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: file is empty") from None
        rows = list(reader)
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")

    col_index = {name: i for i, name in enumerate(header)}
    for required in (schema.label_column, schema.attribute_column):
        if required not in col_index:
            raise SchemaError(f"column {required!r} not found in header")

    if schema.feature_columns is not None:
        feature_cols = list(schema.feature_columns)
    else:
        excluded = {schema.label_column, schema.attribute_column, *schema.drop_columns}
        feature_cols = [c for c in header if c not in excluded]
    for c in feature_cols:
        if c not in col_index:
            raise SchemaError(f"feature column {c!r} not found in header")
    for c in schema.categorical_columns:
        if c not in col_index:
            raise SchemaError(f"categorical column {c!r} not found in header")
    categorical = set(schema.categorical_columns)

    n = len(rows)
    width = len(header)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise RowParseError(r, f"expected {width} cells, found {len(row)}")

    labels = np.zeros(n, dtype=np.int64)
    for r, row in enumerate(rows):
        cell = row[col_index[schema.label_column]].strip()
        if cell == "":
            raise RowParseError(r, f"missing value in column {schema.label_column!r}")
        labels[r] = 1 if cell == schema.positive_label_value else 0

    attribute = np.zeros(n, dtype=np.int64)
    other_level: str | None = None
    for r, row in enumerate(rows):
        cell = row[col_index[schema.attribute_column]].strip()
        if cell == "":
            raise RowParseError(r, f"missing value in column {schema.attribute_column!r}")
        if cell == schema.protected_value:
            attribute[r] = 1
        else:
            if other_level is None:
                other_level = cell
            elif cell != other_level:
                raise SchemaError(
                    f"attribute column {schema.attribute_column!r} has a third value "
                    f"{cell!r} (expected {schema.protected_value!r} or {other_level!r})"
                )

    # Build feature blocks column by column so one-hot layouts are deterministic.
    blocks: list[np.ndarray] = []
    names: list[str] = []
    for c in feature_cols:
        j = col_index[c]
        cells = [row[j].strip() for row in rows]
        if c in categorical:
            levels = sorted(set(cells))
            if "" in levels:
                r = cells.index("")
                raise RowParseError(r, f"missing value in column {c!r}")
            level_pos = {lv: k for k, lv in enumerate(levels)}
            onehot = np.zeros((n, len(levels)))
            for r, cell in enumerate(cells):
                onehot[r, level_pos[cell]] = 1.0
            blocks.append(onehot)
            names.extend(f"{c}={lv}" for lv in levels)
        else:
            col = np.empty(n)
            for r, cell in enumerate(cells):
                if cell == "":
                    raise RowParseError(r, f"missing value in column {c!r}")
                try:
                    col[r] = float(cell)
                except ValueError:
                    raise RowParseError(r, f"cannot parse {cell!r} in column {c!r}") from None
                if not np.isfinite(col[r]):
                    raise RowParseError(r, f"non-finite value {cell!r} in column {c!r}")
            blocks.append(col[:, None])
            names.append(c)

    features = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return TabularDataset(features, labels, attribute, tuple(names))


def split(
    data: TabularDataset, test_fraction: float = 0.2, seed: int = 0
) -> tuple[TabularDataset, TabularDataset]:
    """Deterministic seeded train/test partition (no row lost or duplicated).

    The RNG is numpy's PCG64 ``default_rng``; the same seed always yields the
    same permutation on every platform.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if data.n < 2:
        raise ValueError("need at least 2 rows to split")
    n_test = int(round(data.n * test_fraction))
    n_test = min(max(n_test, 1), data.n - 1)
    perm = np.random.default_rng(seed).permutation(data.n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return data.take(train_idx), data.take(test_idx)
