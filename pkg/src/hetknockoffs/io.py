"""CSV ingestion with optional TOML schema files, and result writers.

Floats are serialized with 17 significant digits so files round-trip
exactly; categorical cells are written as their level labels.  Schema
files list columns in CSV order:

    [[columns]]
    name = "x1"
    kind = "numeric"

    [[columns]]
    name = "tissue"
    kind = "categorical"
    levels = ["blood", "liver"]      # optional; inferred lexicographically
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path
from typing import Optional, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .data import ColumnSchema, KnockoffMatrix, MixedDataset, Provenance
from .errors import SchemaError
from .filter import SelectionResult
from .importance.base import WStatistics

_FLOAT_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FLOAT_FMT % x


def read_schema_file(path) -> list[dict]:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    columns = doc.get("columns")
    if not isinstance(columns, list) or not columns:
        raise SchemaError(f"{path}: schema file needs a non-empty [[columns]] list")
    names = [c.get("name") for c in columns]
    if any(not isinstance(n, str) for n in names) or len(set(names)) != len(names):
        raise SchemaError(f"{path}: column names must be unique strings")
    return columns


def _parse_numeric(cell: str, row: int, name: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise SchemaError(
            f"row {row}, column {name!r}: cannot parse {cell!r} as a number"
        ) from None


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def read_dataset(csv_path, schema_path=None) -> MixedDataset:
    """Load a headered CSV into a MixedDataset.

    Without a schema file, a column is numeric when every cell parses as a
    number, otherwise categorical over its observed labels.  Label-to-level
    maps are lexicographic unless the schema declares explicit levels.
    """
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{csv_path}: empty file (header required)") from None
        rows = [r for r in reader if r]
    if not rows:
        raise SchemaError(f"{csv_path}: no data rows")
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise SchemaError(
                f"{csv_path}: row {i + 1} has {len(r)} cells, header has {len(header)}"
            )

    specs: list[dict]
    if schema_path is not None:
        specs = read_schema_file(schema_path)
        declared = [c["name"] for c in specs]
        if declared != header:
            raise SchemaError(
                f"schema columns {declared} do not match CSV header {header}"
            )
    else:
        specs = []
        for j, name in enumerate(header):
            numeric = all(_is_number(r[j]) for r in rows)
            specs.append({"name": name, "kind": "numeric" if numeric else "categorical"})

    n, p = len(rows), len(header)
    values = np.empty((n, p))
    schema: list[ColumnSchema] = []
    for j, spec in enumerate(specs):
        name, kind = spec["name"], spec.get("kind", "numeric")
        if kind == "numeric":
            for i, r in enumerate(rows):
                values[i, j] = _parse_numeric(r[j], i + 1, name)
            schema.append(ColumnSchema(name, "numeric"))
            continue
        if kind != "categorical":
            raise SchemaError(f"column {name!r}: unknown kind {kind!r}")
        observed = [r[j] for r in rows]
        if "levels" in spec:
            labels = [str(v) for v in spec["levels"]]
        else:
            labels = sorted(set(observed))
        extra = sorted(set(observed) - set(labels))
        if extra:
            raise SchemaError(
                f"column {name!r}: labels {extra} exceed the {len(labels)} declared levels"
            )
        if len(labels) < 2:
            raise SchemaError(f"column {name!r}: needs at least 2 levels, saw {labels}")
        level_of = {lab: k + 1 for k, lab in enumerate(labels)}
        for i, lab in enumerate(observed):
            values[i, j] = level_of[lab]
        schema.append(ColumnSchema(name, "categorical", len(labels), tuple(labels)))
    return MixedDataset(values, schema)


def _cell(value: float, schema: ColumnSchema) -> str:
    if schema.is_categorical:
        k = int(value)
        return schema.labels[k - 1] if schema.labels else str(k)
    return _fmt(value)


def write_dataset(ds: MixedDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ds.names)
        for i in range(ds.n):
            writer.writerow(_cell(ds.values[i, j], ds.schema[j]) for j in range(ds.p))


def write_knockoffs(Xt: KnockoffMatrix, path) -> None:
    write_dataset(Xt, path)


def write_schema(ds: MixedDataset, path) -> None:
    """Emit a TOML schema file describing a dataset's columns."""
    lines = []
    for col in ds.schema:
        lines.append("[[columns]]")
        lines.append(f'name = "{col.name}"')
        lines.append(f'kind = "{col.kind}"')
        if col.is_categorical:
            labels = col.labels or tuple(str(k) for k in range(1, col.levels + 1))
            inner = ", ".join(f'"{lab}"' for lab in labels)
            lines.append(f"levels = [{inner}]")
        lines.append("")
    Path(path).write_text("\n".join(lines))


def write_w(w: WStatistics, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "w", "method"])
        for name, wj in zip(w.names, w.w):
            writer.writerow([name, _fmt(wj), w.method])


def read_w(path) -> WStatistics:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["feature", "w", "method"]:
            raise SchemaError(f"{path}: expected header feature,w,method")
        rows = [r for r in reader if r]
    if not rows:
        raise SchemaError(f"{path}: no W rows")
    return WStatistics(
        w=np.array([_parse_numeric(r[1], i + 1, "w") for i, r in enumerate(rows)]),
        method=rows[0][2],
        names=tuple(r[0] for r in rows),
    )


def write_selection(result: SelectionResult, names: Sequence[str], path) -> None:
    thr = _fmt(result.threshold) if np.isfinite(result.threshold) else "inf"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "selected", "threshold", "q"])
        for j, name in enumerate(names):
            writer.writerow([name, str(j in result.selected).lower(), thr, _fmt(result.q)])


def read_column(path, column: Optional[str] = None) -> np.ndarray:
    """Single numeric column from a CSV (the only column by default)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        if column is None:
            if len(header) != 1:
                raise SchemaError(
                    f"{path}: has {len(header)} columns; name one with --column"
                )
            j = 0
        else:
            if column not in header:
                raise SchemaError(f"{path}: no column named {column!r}")
            j = header.index(column)
        vals = [_parse_numeric(r[j], i + 1, header[j]) for i, r in enumerate(reader) if r]
    if not vals:
        raise SchemaError(f"{path}: no data rows")
    return np.asarray(vals)
