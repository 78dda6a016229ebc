"""Undirected simple graphs in CSR form and the linear operators built on them.

The base :class:`Graph` never stores self-loops.  The GCN propagation matrix
``S = D~^{-1/2} (A + I) D~^{-1/2}`` adds them on the fly inside
:class:`NormalizedAdjacency`, while GEE and the modularity terms use the raw
adjacency.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .errors import DatasetFormatError, DegenerateGraphError, NodeIndexError, ShapeError

MASKED = -1
# below this size a dense product beats scipy's per-call overhead
DENSE_MAX_NODES = 128


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph.

    Each undirected edge ``{u, v}`` is stored twice (``u -> v`` and
    ``v -> u``); column indices are sorted within each row.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    _adj: sp.csr_matrix = field(repr=False)

    @property
    def m(self) -> int:
        return int(self.col_idx.size // 2)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr).astype(np.int64)

    @property
    def adjacency(self) -> sp.csr_matrix:
        """The binary adjacency as a float64 scipy CSR matrix (read-only use)."""
        return self._adj

    @cached_property
    def adjacency_op(self) -> np.ndarray | sp.csr_matrix:
        """``A`` for repeated products: dense on small graphs, CSR otherwise."""
        return self._adj.toarray() if self.n <= DENSE_MAX_NODES else self._adj

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_idx[self.row_ptr[i] : self.row_ptr[i + 1]]

    def edges(self) -> np.ndarray:
        """Unique undirected edges as an ``(m, 2)`` array with ``u < v``."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        keep = rows < self.col_idx
        return np.column_stack([rows[keep], self.col_idx[keep]])

    def to_dense(self) -> np.ndarray:
        return self._adj.toarray()

    def require_edges(self) -> None:
        if self.m == 0:
            raise DegenerateGraphError("graph has no edges; modularity/GEE are undefined")


def from_edge_list(edges: Iterable[tuple[int, int]] | np.ndarray, n: int) -> Graph:
    """Build a :class:`Graph` from ``(u, v)`` pairs over nodes ``0..n-1``.

    Self-loops are dropped; duplicates and reversed duplicates collapse to a
    single undirected edge.
    """
    n = int(n)
    if n < 0:
        raise ValueError("node count must be non-negative")
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ShapeError(f"edges must be (k, 2), got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        bad = arr[(arr < 0).any(axis=1) | (arr >= n).any(axis=1)][0]
        raise NodeIndexError(f"edge {tuple(bad)} out of range for n={n}")

    arr = arr[arr[:, 0] != arr[:, 1]]
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    pairs = np.unique(lo * n + hi) if n else np.zeros(0, dtype=np.int64)
    lo, hi = pairs // max(n, 1), pairs % max(n, 1)

    rows = np.concatenate([lo, hi])
    cols = np.concatenate([hi, lo])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=row_ptr[1:])
    col_idx = cols.astype(np.int64)
    adj = sp.csr_matrix((np.ones(col_idx.size), col_idx, row_ptr), shape=(n, n))
    row_ptr.flags.writeable = False
    col_idx.flags.writeable = False
    return Graph(n=n, row_ptr=row_ptr, col_idx=col_idx, _adj=adj)


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """The GCN propagation operator ``S = D~^{-1/2} (A + I) D~^{-1/2}``."""

    graph: Graph
    scale: np.ndarray  # D~_ii^{-1/2}
    _mat: np.ndarray | sp.csr_matrix = field(default=None, repr=False)  # S itself; dense on small graphs

    @property
    def n(self) -> int:
        return self.graph.n

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return apply_operator(self, x)

    def to_dense(self) -> np.ndarray:
        return apply_operator(self, np.eye(self.n))


def normalized_adjacency(g: Graph) -> NormalizedAdjacency:
    scale = 1.0 / np.sqrt(g.degrees.astype(np.float64) + 1.0)
    scale.flags.writeable = False
    d = sp.diags(scale)
    mat = sp.csr_matrix(d @ (g.adjacency + sp.identity(g.n, format="csr")) @ d)
    return NormalizedAdjacency(graph=g, scale=scale, _mat=mat.toarray() if g.n <= DENSE_MAX_NODES else mat)


def apply_operator(s: NormalizedAdjacency, x: np.ndarray) -> np.ndarray:
    """Compute ``S @ x``; ``O((m + n) d)`` once the graph is large enough to keep ``S`` sparse."""
    x = np.asarray(x, dtype=np.float64)
    vector = x.ndim == 1
    if vector:
        x = x[:, None]
    if x.shape[0] != s.n:
        raise ShapeError(f"operator has {s.n} rows, input has {x.shape[0]}")
    if s._mat is None:
        y = s.scale[:, None] * x
        out = s.scale[:, None] * (s.graph.adjacency @ y + y)
    else:
        out = s._mat @ x
    return out[:, 0] if vector else out


def modularity_forms(g: Graph, c: np.ndarray) -> tuple[float, float]:
    """Return ``(Tr(C^T B C), ||sum_i C_i||_2)`` for the modularity matrix ``B``.

    ``B = A - v v^T / 2m`` is never materialised.
    """
    g.require_edges()
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != g.n:
        raise ShapeError(f"expected ({g.n}, K) assignment matrix, got {c.shape}")
    two_m = 2.0 * g.m
    ac = g.adjacency @ c
    vc = g.degrees @ c
    trace_term = float(np.sum(c * ac) - vc @ vc / two_m)
    colsum_norm = float(np.linalg.norm(c.sum(axis=0)))
    return trace_term, colsum_norm


# --- text formats -----------------------------------------------------------


def _data_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line[0] in "#%":
                continue
            yield lineno, line.split()


def read_edge_list(path: str | Path) -> np.ndarray:
    """Parse a whitespace-separated edge file into an ``(k, 2)`` int array.

    A third column (weight) is tolerated and discarded.
    """
    out = []
    for lineno, parts in _data_lines(Path(path)):
        if len(parts) < 2:
            raise DatasetFormatError(f"{path}:{lineno}: expected two node ids, got {parts!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise DatasetFormatError(f"{path}:{lineno}: non-integer node id in {parts[:2]!r}") from None
        if u < 0 or v < 0:
            raise DatasetFormatError(f"{path}:{lineno}: negative node id")
        out.append((u, v))
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)


def read_labels(path: str | Path) -> tuple[np.ndarray | None, np.ndarray]:
    """Parse a label file.

    One column: line ``i`` holds the label of node ``i``.  Two columns: each
    line is ``node_id label``.  Returns ``(ids_or_None, labels)``.
    """
    ids, labels, width = [], [], None
    for lineno, parts in _data_lines(Path(path)):
        if width is None:
            width = len(parts)
        if len(parts) != width or width not in (1, 2):
            raise DatasetFormatError(f"{path}:{lineno}: expected {width or 1} column(s), got {len(parts)}")
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise DatasetFormatError(f"{path}:{lineno}: non-integer entry {parts!r}") from None
        if width == 2:
            ids.append(vals[0])
        labels.append(vals[-1])
    y = np.asarray(labels, dtype=np.int64)
    if y.size and y.min() < MASKED:
        raise DatasetFormatError(f"{path}: labels must be >= -1")
    return (np.asarray(ids, dtype=np.int64) if width == 2 else None), y


def write_edge_list(g: Graph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={g.n} m={g.m}\n")
        for u, v in g.edges():
            fh.write(f"{u} {v}\n")


def write_labels(y: np.ndarray, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{int(v)}\n" for v in y)
