"""Knockoff / knockoff+ thresholding and selection evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class SelectionResult:
    selected: frozenset
    threshold: float
    q: float
    offset: int


def _w_array(w) -> np.ndarray:
    arr = getattr(w, "w", w)
    return np.asarray(arr, dtype=np.float64)


def knockoff_threshold(w, q: float, offset: int = 1) -> float:
    """Smallest t with (offset + #{W_j <= -t}) / max(1, #{W_j >= t}) <= q.

    Candidates are the distinct nonzero |W_j|; +inf when no candidate
    qualifies (empty selection).  offset=1 is knockoff+ (exact
    finite-sample FDR control); offset=0 is the plain knockoff rule.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0,1), got {q}")
    if offset not in (0, 1):
        raise ValueError(f"offset must be 0 or 1, got {offset}")
    W = _w_array(w)
    candidates = np.unique(np.abs(W[W != 0.0]))
    for t in candidates:
        ratio = (offset + np.sum(W <= -t)) / max(1, np.sum(W >= t))
        if ratio <= q:
            return float(t)
    return float("inf")


def select(w, q: float, offset: int = 1) -> SelectionResult:
    """Apply the knockoff filter: selected = { j : W_j >= threshold }."""
    W = _w_array(w)
    t = knockoff_threshold(W, q, offset)
    selected = frozenset(int(j) for j in np.flatnonzero(W >= t))
    return SelectionResult(selected=selected, threshold=t, q=q, offset=offset)


def evaluate_selection(selected: Iterable[int], true_active: Iterable[int]):
    """(false discovery proportion, power) of a selection against known truth."""
    sel = set(int(j) for j in selected)
    truth = set(int(j) for j in true_active)
    fdp = len(sel - truth) / max(1, len(sel))
    power = len(sel & truth) / max(1, len(truth))
    return fdp, power
