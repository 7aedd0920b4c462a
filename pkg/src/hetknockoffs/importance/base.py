"""Shared pieces for importance statistics: the W container and one-hot
encoding of mixed datasets (baseline level dropped, so level 1 carries an
implicit zero coefficient)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..data import MixedDataset

AGGREGATORS = ("max", "l2", "sum-abs")


@dataclass(frozen=True)
class WStatistics:
    """Per-feature knockoff statistics W_j; one entry per original feature."""

    w: np.ndarray
    method: str
    names: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.shape != (len(self.names),):
            raise ValueError("need exactly one W entry per feature")
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class Encoded:
    matrix: np.ndarray
    groups: tuple[tuple[int, ...], ...]  # encoded column indices per original feature


def one_hot(X: MixedDataset) -> Encoded:
    """Numeric columns pass through; a categorical column with K levels
    becomes K-1 indicator columns for levels 2..K."""
    cols = []
    groups = []
    pos = 0
    for j, schema in enumerate(X.schema):
        x = X.values[:, j]
        if schema.is_categorical:
            width = schema.levels - 1
            block = (x[:, None] == np.arange(2, schema.levels + 1)[None, :]).astype(np.float64)
            cols.append(block)
        else:
            width = 1
            cols.append(x[:, None])
        groups.append(tuple(range(pos, pos + width)))
        pos += width
    return Encoded(matrix=np.hstack(cols), groups=tuple(groups))


def augmented_encoding(X: MixedDataset, Xt: MixedDataset) -> tuple[np.ndarray, Encoded, Encoded]:
    """One-hot encode original and knockoff with aligned layouts and stack
    them side by side; knockoff groups are offset by the encoded width."""
    if X.schema != Xt.schema:
        raise ValueError("original and knockoff encodings must share a schema")
    enc = one_hot(X)
    enc_t = one_hot(Xt)
    d = enc.matrix.shape[1]
    shifted = Encoded(
        matrix=enc_t.matrix,
        groups=tuple(tuple(k + d for k in g) for g in enc_t.groups),
    )
    return np.hstack([enc.matrix, enc_t.matrix]), enc, shifted


def aggregate_group(values: np.ndarray, group: tuple[int, ...], how: str) -> float:
    """Collapse a one-hot group of per-column magnitudes to one score."""
    v = np.abs(values[list(group)])
    if how == "max":
        return float(v.max()) if v.size else 0.0
    if how == "l2":
        return float(np.sqrt((v**2).sum()))
    if how == "sum-abs":
        return float(v.sum())
    raise ValueError(f"unknown aggregator {how!r}; pick one of {AGGREGATORS}")
