"""Classical heads: Lloyd's k-means with k-means++ restarts, and shrinkage LDA."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFitError, InsufficientPointsError, ShapeError


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int = 0
    empty_clusters: bool = False
    inertia_trace: list[float] = field(default_factory=list, repr=False)


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers[j] = points[idx]
        closest = np.minimum(closest, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _lloyd(points, centers, max_iter):
    k = centers.shape[0]
    labels = None
    reseeded = False
    empty = False
    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        dist = _sq_dists(points, centers)
        new_labels = np.argmin(dist, axis=1)
        trace.append(float(dist[np.arange(len(points)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        sums = np.stack([np.bincount(labels, weights=col, minlength=k) for col in points.T], axis=1)
        nonempty = counts > 0
        centers = centers.copy()
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            if reseeded:
                empty = True
            else:
                # one re-seed per run: move each empty centroid to the farthest points
                reseeded = True
                far = np.argsort(-dist[np.arange(len(points)), labels], kind="stable")
                for j, p in zip(np.flatnonzero(~nonempty), far):
                    centers[j] = points[p]
    dist = _sq_dists(points, centers)
    labels = np.argmin(dist, axis=1)
    inertia = float(dist[np.arange(len(points)), labels].sum())
    empty = empty or np.bincount(labels, minlength=k).min() == 0
    return labels, centers, inertia, it, empty, trace


def kmeans(
    points: np.ndarray,
    k: int,
    restarts: int = 1,
    max_iter: int = 300,
    rng: np.random.Generator | None = None,
) -> KMeansResult:
    """Best-of-``restarts`` Lloyd's k-means with k-means++ seeding.

    Ties in assignment go to the lowest centroid index.  A cluster that ends
    up empty is re-seeded from the farthest point once; if it empties again
    it stays empty and ``empty_clusters`` is set.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise InsufficientPointsError(f"{n} points cannot form {k} clusters")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    rng = np.random.default_rng() if rng is None else rng

    best = None
    for _ in range(max(1, restarts)):
        labels, centers, inertia, it, empty, trace = _lloyd(points, _kmeanspp(points, k, rng), max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(labels, centers, inertia, it, empty, trace)
    return best


@dataclass
class LdaModel:
    classes: np.ndarray
    class_means: np.ndarray
    pooled_covariance: np.ndarray
    log_priors: np.ndarray
    shrinkage: float
    _coef: np.ndarray = field(repr=False, default=None)
    _intercept: np.ndarray = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]


def lda_fit(x: np.ndarray, y: np.ndarray, shrinkage: float = 1e-3) -> LdaModel:
    """Fit pooled-covariance LDA on labelled rows.

    Rows with label ``-1`` are ignored.  The within-class covariance is shrunk
    towards a scaled identity: ``(1 - s) * Sw + s * tr(Sw)/d * I``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError(f"x {x.shape} and y {y.shape} disagree")
    keep = y >= 0
    x, y = x[keep], y[keep]
    if x.shape[0] == 0:
        raise DegenerateFitError("no labelled rows to fit LDA on")
    classes, yi = np.unique(y, return_inverse=True)
    if classes.size < 2:
        raise DegenerateFitError(f"LDA needs >= 2 classes, got {classes.size}")
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError("shrinkage must lie in [0, 1]")

    n, d = x.shape
    counts = np.bincount(yi)
    means = np.zeros((classes.size, d))
    np.add.at(means, yi, x)
    means /= counts[:, None]
    centered = x - means[yi]
    cov = centered.T @ centered / max(n - classes.size, 1)
    cov = 0.5 * (cov + cov.T)
    target = np.trace(cov) / d
    if not target > 0:
        target = 1.0  # zero within-class scatter
    cov = (1.0 - shrinkage) * cov + shrinkage * target * np.eye(d)
    if np.linalg.eigvalsh(cov)[0] <= 0:
        cov += (1e-12 * target - np.linalg.eigvalsh(cov)[0]) * np.eye(d)
    log_priors = np.log(counts / n)

    coef = np.linalg.solve(cov, means.T)  # d x K, columns are Sigma^{-1} mu_k
    intercept = -0.5 * np.sum(means.T * coef, axis=0) + log_priors
    return LdaModel(classes, means, cov, log_priors, shrinkage, coef, intercept)


def lda_scores(model: LdaModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ShapeError(f"model expects {model.dim} columns, got {x.shape}")
    return x @ model._coef + model._intercept


def lda_predict(model: LdaModel, x: np.ndarray) -> np.ndarray:
    """Argmax of the linear discriminants; ties go to the lowest class."""
    return model.classes[np.argmax(lda_scores(model, x), axis=1)]
