"""Adjusted Rand Index and masked accuracy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMaskError, ShapeError


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray  # int64, shape (clusters in a, clusters in b)

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def contingency_table(a, b) -> ContingencyTable:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"label vectors differ in shape: {a.shape} vs {b.shape}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    counts = np.zeros((ai.max(initial=-1) + 1, bi.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(counts, (ai, bi), 1)
    return ContingencyTable(counts)


def _pairs(x) -> int:
    x = np.asarray(x, dtype=np.int64)
    return int(np.sum(x * (x - 1) // 2))


def ari(a, b) -> float:
    """Adjusted Rand Index between two partitions.

    Pair counts are exact integers; the only floating-point step is the final
    division.  When the expected index equals its maximum (e.g. both
    partitions are a single cluster) the result is 1.0 for identical
    partitions and 0.0 otherwise.
    """
    table = contingency_table(a, b)
    n = table.total
    if n < 2:
        raise ValueError("ARI needs at least two items")
    index = _pairs(table.counts)
    sum_a = _pairs(table.row_sums)
    sum_b = _pairs(table.col_sums)
    total = n * (n - 1) // 2
    # (index - sum_a*sum_b/total) / ((sum_a+sum_b)/2 - sum_a*sum_b/total), scaled by 2*total
    num = 2 * (index * total - sum_a * sum_b)
    den = (sum_a + sum_b) * total - 2 * sum_a * sum_b
    if den == 0:
        same = table.counts.shape[0] == table.counts.shape[1] and np.count_nonzero(table.counts) == table.counts.shape[0]
        return 1.0 if same else 0.0
    return num / den


def accuracy(pred, truth, mask) -> float:
    """Fraction of nodes in ``mask`` (indices or boolean) whose prediction is right."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise EmptyMaskError("accuracy over an empty node set")
    return float(np.mean(pred[idx] == truth[idx]))
