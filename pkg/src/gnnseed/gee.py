"""One-hot graph encoder embedding (GEE), supervised and unsupervised."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyClassError
from .graph import MASKED, Graph, modularity_forms
from .heads import kmeans


@dataclass(frozen=True)
class EncoderWeights:
    """Column-normalised one-hot matrix ``W`` kept in factored form.

    ``W[i, k] = 1 / class_sizes[k]`` when ``labels[i] == k`` and 0 otherwise;
    masked nodes have an all-zero row.
    """

    labels: np.ndarray
    class_sizes: np.ndarray
    num_classes: int

    @property
    def node_weights(self) -> np.ndarray:
        """Per-node nonzero value of ``W`` (0 for masked nodes)."""
        w = np.zeros(self.labels.size)
        known = self.labels >= 0
        sizes = self.class_sizes[self.labels[known]]
        w[known] = np.where(sizes > 0, 1.0 / np.maximum(sizes, 1), 0.0)
        return w

    def dense(self) -> np.ndarray:
        w = np.zeros((self.labels.size, self.num_classes))
        known = np.flatnonzero(self.labels >= 0)
        w[known, self.labels[known]] = self.node_weights[known]
        return w


def encoder_weights(y: np.ndarray, num_classes: int | None = None, allow_empty: bool = False) -> EncoderWeights:
    y = np.asarray(y, dtype=np.int64)
    if num_classes is None:
        num_classes = int(y.max()) + 1 if y.size else 0
    if y.size and (y.min() < MASKED or y.max() >= num_classes):
        raise ValueError(f"labels must lie in [-1, {num_classes - 1}]")
    sizes = np.bincount(y[y >= 0], minlength=num_classes)
    if not allow_empty and (sizes == 0).any():
        missing = np.flatnonzero(sizes == 0).tolist()
        raise EmptyClassError(f"classes {missing} have no unmasked node")
    return EncoderWeights(labels=y, class_sizes=sizes, num_classes=num_classes)


def supervised_gee(
    g: Graph, y: np.ndarray, num_classes: int | None = None, allow_empty: bool = False
) -> np.ndarray:
    """Return ``Z = A W`` (n x K) using a single pass over the CSR arrays."""
    w = encoder_weights(y, num_classes, allow_empty=allow_empty)
    k = w.num_classes
    src = np.repeat(np.arange(g.n), g.degrees)
    nbr_label = w.labels[g.col_idx]
    known = nbr_label >= 0
    flat = src[known] * k + nbr_label[known]
    z = np.bincount(flat, weights=w.node_weights[g.col_idx[known]], minlength=g.n * k)
    return z.reshape(g.n, k)


def row_normalize(z: np.ndarray) -> np.ndarray:
    """Scale every row to unit Euclidean norm; all-zero rows stay zero."""
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    return z / np.where(norms > 0, norms, 1.0)


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Rename clusters by order of first appearance (0, 1, 2, ...)."""
    labels = np.asarray(labels)
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    mapping = np.full(labels.max() + 1 if labels.size else 0, -1, dtype=np.int64)
    mapping[order] = np.arange(order.size)
    return mapping[labels]


def random_labels(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform i.i.d. labels, redrawn until every class is used."""
    if n < k:
        raise EmptyClassError(f"cannot populate {k} classes with {n} nodes")
    while True:
        y = rng.integers(k, size=n)
        if np.bincount(y, minlength=k).min() > 0:
            return y


@dataclass
class UnsupervisedGeeResult:
    embedding: np.ndarray
    labels: np.ndarray
    iterations: int
    converged: bool
    modularity: float = float("nan")


def partition_modularity(g: Graph, labels: np.ndarray, k: int) -> float:
    """Newman modularity of a hard partition."""
    trace, _ = modularity_forms(g, np.eye(k)[labels])
    return trace / (2.0 * g.m)


def _alternate(g, k, max_iter, rng, restarts, normalize):
    labels = canonical_labels(random_labels(g.n, k, rng))
    z = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = supervised_gee(g, labels, k, allow_empty=True)
        points = row_normalize(z) if normalize else z
        new = canonical_labels(kmeans(points, k, restarts=restarts, rng=rng).labels)
        converged = np.array_equal(new, labels)
        labels = new
        if converged:
            break
    return UnsupervisedGeeResult(z, labels, it, converged, partition_modularity(g, labels, k))


def unsupervised_gee(
    g: Graph,
    k: int,
    max_iter: int = 30,
    rng: np.random.Generator | None = None,
    kmeans_restarts: int | None = None,
    normalize: bool = True,
    n_init: int = 5,
) -> UnsupervisedGeeResult:
    """Alternate supervised GEE and k-means from a random labelling.

    Each run stops when the k-means labels equal the previous labels after
    canonical relabelling, or after ``max_iter`` rounds.  With ``normalize``
    k-means sees unit-norm rows, which removes the degree scale from the
    clustering; the returned embedding is always the raw ``A W`` of the last
    round.

    ``n_init`` independent random starts are run and the one whose final
    partition has the highest modularity is kept (earliest on ties).  A
    single start can lock into a balanced labelling that k-means reproduces
    exactly, since a node never counts its own label.
    """
    g.require_edges()
    if k < 2:
        raise ValueError("unsupervised GEE needs k >= 2")
    if max_iter < 1 or n_init < 1:
        raise ValueError("max_iter and n_init must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    restarts = k if kmeans_restarts is None else kmeans_restarts
    best = None
    for _ in range(n_init):
        run = _alternate(g, k, max_iter, rng, restarts, normalize)
        if best is None or run.modularity > best.modularity:
            best = run
    return best
