import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnnseed.errors import DegenerateFitError, InsufficientPointsError, ShapeError
from gnnseed.heads import kmeans, lda_fit, lda_predict, lda_scores

from oracles import best_partition_inertia


def _inertia(points, labels, centroids):
    return float(((points - centroids[labels]) ** 2).sum())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(4, 7), st.integers(2, 3))
def test_kmeans_never_beats_exhaustive_optimum(seed, n, k):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 2))
    res = kmeans(pts, k, restarts=5, rng=rng)
    assert res.inertia >= best_partition_inertia(pts, k) - 1e-9
    assert res.inertia == pytest.approx(_inertia(pts, res.labels, res.centroids))


def test_kmeans_finds_optimum_of_separated_blobs():
    rng = np.random.default_rng(1)
    centers = np.array([[0, 0], [10, 0], [0, 10]])
    pts = np.vstack([c + 0.3 * rng.normal(size=(3, 2)) for c in centers])
    res = kmeans(pts, 3, restarts=3, rng=rng)
    assert res.inertia == pytest.approx(best_partition_inertia(pts, 3), rel=1e-9)
    assert len(set(res.labels[:3])) == len(set(res.labels[3:6])) == len(set(res.labels[6:])) == 1


def test_kmeans_restarts_keep_the_best():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(60, 3))
    single = [kmeans(pts, 4, restarts=1, rng=np.random.default_rng(s)).inertia for s in range(10)]
    many = kmeans(pts, 4, restarts=10, rng=np.random.default_rng(0)).inertia
    assert many <= max(single)


def test_kmeans_inertia_trace_non_increasing():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(200, 2))
    res = kmeans(pts, 5, rng=rng)
    assert np.all(np.diff(res.inertia_trace) <= 1e-9)


def test_kmeans_duplicate_points_flag_empty():
    pts = np.zeros((5, 2))
    res = kmeans(pts, 3, rng=np.random.default_rng(0))
    assert res.empty_clusters
    assert res.inertia == 0.0


def test_kmeans_errors():
    with pytest.raises(InsufficientPointsError):
        kmeans(np.zeros((2, 2)), 3)
    with pytest.raises(ValueError):
        kmeans(np.zeros((4, 2)), 0)


def test_kmeans_deterministic():
    pts = np.random.default_rng(5).normal(size=(50, 2))
    a = kmeans(pts, 3, restarts=3, rng=np.random.default_rng(9))
    b = kmeans(pts, 3, restarts=3, rng=np.random.default_rng(9))
    assert np.array_equal(a.labels, b.labels)


def _lda_oracle(x, y, shrinkage):
    classes = sorted(set(y.tolist()))
    n, d = x.shape
    means = [x[y == c].mean(axis=0) for c in classes]
    sw = np.zeros((d, d))
    for i in range(n):
        diff = x[i] - means[classes.index(y[i])]
        sw += np.outer(diff, diff)
    sw /= n - len(classes)
    sw = (1 - shrinkage) * sw + shrinkage * np.trace(sw) / d * np.eye(d)
    inv = np.linalg.inv(sw)
    priors = [np.mean(y == c) for c in classes]
    return np.column_stack(
        [x @ inv @ mu - 0.5 * mu @ inv @ mu + np.log(p) for mu, p in zip(means, priors)]
    )


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.integers(1, 4))
def test_lda_scores_match_textbook_formula(seed, k, d):
    rng = np.random.default_rng(seed)
    y = np.concatenate([np.arange(k), rng.integers(0, k, 20)])
    x = rng.normal(size=(y.size, d)) + y[:, None]
    model = lda_fit(x, y, shrinkage=1e-3)
    assert np.allclose(lda_scores(model, x), _lda_oracle(x, y, 1e-3), atol=1e-8)


def test_lda_separable_and_masked_rows():
    x = np.array([[0.0, 0.1], [0.2, 0.0], [5.0, 5.1], [5.2, 4.9], [100.0, -100.0]])
    y = np.array([0, 0, 1, 1, -1])
    model = lda_fit(x, y)
    assert model.class_means.shape == (2, 2)
    assert lda_predict(model, x[:4]).tolist() == [0, 0, 1, 1]


def test_lda_keeps_original_class_ids():
    x = np.array([[0.0], [0.1], [3.0], [3.1]])
    model = lda_fit(x, np.array([4, 4, 9, 9]))
    assert lda_predict(model, np.array([[0.05], [3.05]])).tolist() == [4, 9]


def test_lda_ties_go_to_lowest_class():
    # a point exactly between two symmetric classes with equal priors
    x = np.array([[-1.0], [-1.2], [1.0], [1.2]])
    model = lda_fit(x, np.array([0, 0, 1, 1]))
    assert lda_predict(model, np.array([[0.0]])).tolist() == [0]


def test_lda_zero_scatter_is_still_fit():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    model = lda_fit(x, np.array([0, 0, 1, 1]))
    assert lda_predict(model, x).tolist() == [0, 0, 1, 1]


def test_lda_errors():
    with pytest.raises(DegenerateFitError):
        lda_fit(np.zeros((3, 2)), np.array([1, 1, -1]))
    with pytest.raises(DegenerateFitError):
        lda_fit(np.zeros((2, 2)), np.array([-1, -1]))
    with pytest.raises(ShapeError):
        lda_fit(np.zeros((3, 2)), np.array([0, 1]))
    model = lda_fit(np.array([[0.0], [1.0]]), np.array([0, 1]))
    with pytest.raises(ShapeError):
        lda_scores(model, np.zeros((2, 3)))
