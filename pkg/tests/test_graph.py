import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnnseed.errors import DatasetFormatError, DegenerateGraphError, NodeIndexError, ShapeError
from gnnseed.graph import (
    apply_operator,
    from_edge_list,
    modularity_forms,
    normalized_adjacency,
    read_edge_list,
    read_labels,
    write_edge_list,
    write_labels,
)

from conftest import random_graph
from oracles import dense_s, modularity_double_sum


def test_duplicates_reversed_pairs_and_self_loops_collapse():
    g = from_edge_list([(0, 1), (1, 0), (0, 1), (2, 2), (1, 2)], 4)
    assert g.n == 4
    assert g.m == 2
    assert g.degrees.tolist() == [1, 2, 1, 0]
    assert g.edges().tolist() == [[0, 1], [1, 2]]
    a = g.to_dense()
    assert np.array_equal(a, a.T)
    assert np.all(np.diag(a) == 0)


def test_csr_rows_sorted():
    g = from_edge_list([(3, 0), (3, 1), (0, 1), (2, 3)], 4)
    for i in range(g.n):
        nb = g.neighbors(i)
        assert np.all(np.diff(nb) > 0)
    assert g.neighbors(3).tolist() == [0, 1, 2]


def test_out_of_range_node():
    with pytest.raises(NodeIndexError):
        from_edge_list([(0, 5)], 5)
    with pytest.raises(NodeIndexError):
        from_edge_list([(-1, 0)], 5)


def test_bad_edge_shape():
    with pytest.raises(ShapeError):
        from_edge_list(np.zeros((3, 3), dtype=int), 4)


def test_edgeless_graph():
    g = from_edge_list([], 3)
    assert g.m == 0
    with pytest.raises(DegenerateGraphError):
        g.require_edges()
    with pytest.raises(DegenerateGraphError):
        modularity_forms(g, np.ones((3, 2)) / 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_operator_matches_dense_s(n, seed, p):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p, connected_pair=False)
    s = normalized_adjacency(g)
    x = rng.normal(size=(n, 3))
    assert np.allclose(apply_operator(s, x), dense_s(g.to_dense()) @ x, atol=1e-12, rtol=0)
    assert np.allclose(s.to_dense(), dense_s(g.to_dense()), atol=1e-12, rtol=0)


def test_operator_on_vector_and_shape_error():
    g = from_edge_list([(0, 1)], 2)
    s = normalized_adjacency(g)
    # node degrees are 1, so D~ = 2 I and S = (A + I) / 2
    assert np.allclose(s @ np.array([1.0, 0.0]), [0.5, 0.5])
    with pytest.raises(ShapeError):
        apply_operator(s, np.ones((3, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_modularity_forms_match_double_sum(n, seed, k):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, 0.5)
    c = rng.random((n, k))
    c /= c.sum(axis=1, keepdims=True)
    trace, colsum = modularity_forms(g, c)
    assert abs(trace - modularity_double_sum(g.to_dense(), c)) < 1e-10
    assert abs(colsum - np.linalg.norm(c.sum(axis=0))) < 1e-10


def test_modularity_of_two_triangles():
    g = from_edge_list([(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], 6)
    c = np.repeat(np.eye(2), 3, axis=0)
    trace, colsum = modularity_forms(g, c)
    # each triangle: 6 directed entries minus 6*6/12 expected
    assert trace == pytest.approx(6.0)
    assert colsum == pytest.approx(3 * np.sqrt(2))


def test_edge_file_comments_and_weights(tmp_path):
    f = tmp_path / "g.edges"
    f.write_text("# header\n% another\n\n0 1\n1 2 0.5\n2 0\n")
    edges = read_edge_list(f)
    assert edges.tolist() == [[0, 1], [1, 2], [2, 0]]


def test_edge_file_errors_carry_line_numbers(tmp_path):
    f = tmp_path / "bad.edges"
    f.write_text("# h\n0 1\n3\n")
    with pytest.raises(DatasetFormatError, match=":3:"):
        read_edge_list(f)
    f.write_text("0 x\n")
    with pytest.raises(DatasetFormatError, match=":1:"):
        read_edge_list(f)


def test_label_file_formats(tmp_path):
    one = tmp_path / "a.labels"
    one.write_text("# one per line\n2\n0\n1\n")
    ids, y = read_labels(one)
    assert ids is None and y.tolist() == [2, 0, 1]
    two = tmp_path / "b.labels"
    two.write_text("10 1\n4 0\n")
    ids, y = read_labels(two)
    assert ids.tolist() == [10, 4] and y.tolist() == [1, 0]
    mixed = tmp_path / "c.labels"
    mixed.write_text("1\n2 3\n")
    with pytest.raises(DatasetFormatError, match=":2:"):
        read_labels(mixed)


def test_round_trip(tmp_path, rng):
    g = random_graph(rng, 15, 0.3)
    write_edge_list(g, tmp_path / "g.edges")
    g2 = from_edge_list(read_edge_list(tmp_path / "g.edges"), g.n)
    assert np.array_equal(g.to_dense(), g2.to_dense())
    y = rng.integers(0, 3, size=15)
    write_labels(y, tmp_path / "y.labels")
    assert np.array_equal(read_labels(tmp_path / "y.labels")[1], y)
