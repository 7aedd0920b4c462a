"""Mixed-type dataset containers.

Values are held in a single float64 matrix.  Numeric columns store finite
reals; categorical columns store integer levels ``1..K`` (as floats).
Level labels from ingestion are kept on the schema so files round-trip.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import SchemaError

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class ColumnSchema:
    """Schema for one column: a name, a kind, and (if categorical) K >= 2 levels."""

    name: str
    kind: str
    levels: Optional[int] = None
    labels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if self.levels is None or self.levels < 2:
                raise SchemaError(
                    f"column {self.name!r}: categorical needs levels >= 2, got {self.levels}"
                )
            if self.labels is not None and len(self.labels) != self.levels:
                raise SchemaError(
                    f"column {self.name!r}: {len(self.labels)} labels for {self.levels} levels"
                )
        elif self.levels is not None or self.labels is not None:
            raise SchemaError(f"column {self.name!r}: numeric column cannot carry levels")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL


@dataclass(frozen=True)
class CellViolation:
    row: int
    col: int
    message: str


class MixedDataset:
    """n x p table of mixed numeric/categorical values with an immutable schema."""

    def __init__(self, values, schema: Sequence[ColumnSchema]):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise SchemaError(f"values must be 2-d, got shape {values.shape}")
        n, p = values.shape
        if n < 2 or p < 1:
            raise SchemaError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        schema = tuple(schema)
        if len(schema) != p:
            raise SchemaError(f"{len(schema)} schema entries for {p} columns")
        names = [c.name for c in schema]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")
        values = values.copy()
        values.setflags(write=False)
        self._values = values
        self._schema = schema

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def schema(self) -> tuple[ColumnSchema, ...]:
        return self._schema

    @property
    def n(self) -> int:
        return self._values.shape[0]

    @property
    def p(self) -> int:
        return self._values.shape[1]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self._schema)

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array([c.is_categorical for c in self._schema], dtype=bool)

    def column(self, j: int) -> np.ndarray:
        return self._values[:, j]

    def with_values(self, values) -> "MixedDataset":
        return MixedDataset(values, self._schema)


@dataclass(frozen=True)
class Provenance:
    generator: str
    seed: Optional[int] = None


class KnockoffMatrix(MixedDataset):
    """Knockoff copy of a dataset: identical shape and schema, plus provenance."""

    def __init__(self, values, schema, provenance: Provenance):
        super().__init__(values, schema)
        self.provenance = provenance

    def with_values(self, values) -> "KnockoffMatrix":
        return KnockoffMatrix(values, self.schema, self.provenance)


@dataclass(frozen=True)
class ResidualMatrix:
    """Conditional residuals; categorical columns are identically zero."""

    values: np.ndarray
    categorical_mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.categorical_mask, dtype=bool)
        if values.ndim != 2 or mask.shape != (values.shape[1],):
            raise SchemaError("residual matrix / mask shape mismatch")
        if mask.any() and np.any(values[:, mask] != 0.0):
            raise SchemaError("categorical residual columns must be zero")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "categorical_mask", mask)


def validate(dataset: MixedDataset) -> list[CellViolation]:
    """Check every cell against its column schema; empty list means conforming."""
    out: list[CellViolation] = []
    vals = dataset.values
    for j, col in enumerate(dataset.schema):
        x = vals[:, j]
        if col.is_categorical:
            bad = ~(np.isfinite(x) & (x == np.floor(x)) & (x >= 1) & (x <= col.levels))
            for i in np.flatnonzero(bad):
                out.append(
                    CellViolation(int(i), j, f"level {x[i]!r} outside 1..{col.levels}")
                )
        else:
            for i in np.flatnonzero(~np.isfinite(x)):
                out.append(CellViolation(int(i), j, f"non-finite value {x[i]!r}"))
    return out


def require_valid(dataset: MixedDataset, what: str = "dataset") -> None:
    violations = validate(dataset)
    if violations:
        v = violations[0]
        raise SchemaError(
            f"{what} has {len(violations)} schema violation(s); first at "
            f"row {v.row}, column {dataset.schema[v.col].name!r}: {v.message}"
        )


def swap_columns(
    X: MixedDataset, Xt: KnockoffMatrix, S: Iterable[int]
) -> tuple[MixedDataset, KnockoffMatrix]:
    """Exchange columns in ``S`` between a dataset and its knockoff copy."""
    if X.schema != Xt.schema:
        raise SchemaError("original and knockoff must share a schema")
    S = sorted(set(int(j) for j in S))
    if S and (S[0] < 0 or S[-1] >= X.p):
        raise IndexError(f"swap index out of range for p={X.p}")
    xv = np.array(X.values)
    kv = np.array(Xt.values)
    xv[:, S], kv[:, S] = kv[:, S].copy(), xv[:, S].copy()
    return X.with_values(xv), Xt.with_values(kv)


def numeric_schema(names: Iterable[str]) -> tuple[ColumnSchema, ...]:
    return tuple(ColumnSchema(name, NUMERIC) for name in names)
