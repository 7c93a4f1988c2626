import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from knnperc.errors import InvalidParameterError
from knnperc.nngraph import (
    brute_force_knn_graph,
    build_index,
    build_knn_graph,
    knn_query,
    save_edges,
)
from knnperc.pointproc import Window, from_points, sample_binomial, sample_poisson

LINE = from_points([[0, 0], [1, 0], [3, 0]])


def naive_knn(pts, i, k):
    # independent oracle: plain Python sort on (squared distance, index)
    d = [((p[0] - pts[i][0]) ** 2 + (p[1] - pts[i][1]) ** 2, j) for j, p in enumerate(pts) if j != i]
    return [j for _, j in sorted(d)[:k]]


def naive_edges(pts, k):
    out = set()
    for i in range(len(pts)):
        for j in naive_knn(pts, i, k):
            out.add((min(i, j), max(i, j)))
    return out


def test_collinear_query():
    idx = build_index(LINE)
    assert knn_query(idx, LINE, 2, 1) == [1]
    assert knn_query(idx, LINE, 0, 2) == [1, 2]


def test_collinear_graph():
    g = build_knn_graph(LINE, 1)
    assert g.edge_set() == {(0, 1), (1, 2)}
    assert g.degree().tolist() == [1, 2, 1]


def test_complete_graph_when_k_is_n_minus_1():
    ps = sample_binomial(Window.square(3.0), 12, 1)
    g = build_knn_graph(ps, 11)
    assert g.num_edges == 12 * 11 // 2
    assert sorted(knn_query(build_index(ps), ps, 4, 11)) == [i for i in range(12) if i != 4]


def test_two_points():
    g = brute_force_knn_graph(from_points([[0, 0], [1, 1]]), 1)
    assert g.edge_set() == {(0, 1)}
    assert g.edge_length(0, 1) == pytest.approx(math.sqrt(2))


def test_duplicate_points_tie_by_index():
    ps = from_points([[0, 0], [0, 0], [0, 0], [5, 5]])
    idx = build_index(ps)
    assert knn_query(idx, ps, 0, 1) == [1]
    assert knn_query(idx, ps, 1, 1) == [0]
    assert knn_query(idx, ps, 2, 2) == [0, 1]
    g = build_knn_graph(ps, 1)
    assert g.has_edge(0, 1) and g.edge_length(0, 1) == 0.0
    assert g.edge_set() == brute_force_knn_graph(ps, 1).edge_set()


def test_equidistant_ties_on_lattice():
    xs, ys = np.meshgrid(np.arange(6.0), np.arange(6.0))
    ps = from_points(np.c_[xs.ravel(), ys.ravel()])
    for k in (1, 2, 3, 4, 5, 8):
        assert build_knn_graph(ps, k).edge_set() == naive_edges(ps.points.tolist(), k)


def test_index_partition_and_single_point():
    one = from_points([[0.5, 0.5]], Window.square(1.0))
    b = build_index(one).buckets()
    assert len(b) == 1 and list(b.values())[0].tolist() == [0]
    ps = sample_binomial(Window.square(10), 300, 2)
    idx = build_index(ps)
    allidx = np.concatenate(list(idx.buckets().values()))
    assert sorted(allidx.tolist()) == list(range(300))
    cx, cy = idx.cell_of(ps.points)
    for (bx, by), members in idx.buckets().items():
        assert (cx[members] == bx).all() and (cy[members] == by).all()


def test_cellsize_independence():
    ps = sample_binomial(Window.square(math.sqrt(200)), 200, 11)
    for k in (1, 4, 9):
        a = build_knn_graph(ps, k, cellsize=0.5)
        b = build_knn_graph(ps, k, cellsize=2.0)
        assert a.edge_set() == b.edge_set()
    i0 = build_index(ps, 0.5)
    i1 = build_index(ps, 2.0)
    for i in range(0, 200, 7):
        assert knn_query(i0, ps, i, 6) == knn_query(i1, ps, i, 6)


@pytest.mark.parametrize("cellsize", [0.0, -1.0, float("nan")])
def test_bad_cellsize(cellsize):
    with pytest.raises(InvalidParameterError):
        build_index(LINE, cellsize)


def test_k_out_of_range():
    with pytest.raises(InvalidParameterError):
        build_knn_graph(LINE, 3)
    with pytest.raises(InvalidParameterError):
        build_knn_graph(LINE, 0)
    with pytest.raises(InvalidParameterError):
        knn_query(build_index(LINE), LINE, 0, 3)


def test_queries_match_naive_oracle():
    ps = sample_binomial(Window.square(math.sqrt(500)), 500, 4)
    idx = build_index(ps)
    pts = ps.points.tolist()
    for i in range(500):
        assert knn_query(idx, ps, i, 5) == naive_knn(pts, i, 5)


def test_poisson_graph_matches_oracles():
    ps = sample_poisson(Window.square(math.sqrt(300)), 1.0, 9)
    g = build_knn_graph(ps, 4)
    assert g.edge_set() == brute_force_knn_graph(ps, 4).edge_set()
    assert g.edge_set() == naive_edges(ps.points.tolist(), 4)


def test_grid_matches_brute_force_on_50_sets():
    for s in range(50):
        n = 20 + (s * 37) % 281
        ps = sample_binomial(Window(0, 0, 3.0 + s % 5, 7.0), n, 1000 + s)
        k = (1, 3, 5, 10)[s % 4]
        assert build_knn_graph(ps, k).edge_set() == brute_force_knn_graph(ps, k).edge_set()


def test_clustered_points_match_brute_force():
    rng = np.random.default_rng(0)
    pts = np.clip(np.r_[rng.normal(2, 0.05, (150, 2)), rng.uniform(0, 20, (50, 2))], 0, 20)
    ps = from_points(pts, Window.square(20))
    for k in (1, 7, 30):
        assert build_knn_graph(ps, k).edge_set() == brute_force_knn_graph(ps, k).edge_set()


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 120), k=st.integers(1, 12), seed=st.integers(0, 10**9))
def test_graph_invariants(n, k, seed):
    k = min(k, n - 1)
    ps = sample_binomial(Window(0, 0, 4, 2.5), n, seed)
    g = build_knn_graph(ps, k)
    csr = g.to_csr()
    assert (csr != csr.T).nnz == 0
    assert (csr.diagonal() == 0).all() and all(u not in g.neighbors(u) for u in range(n))
    assert (g.degree() >= min(k, n - 1)).all()
    u, v, w = g.edges()
    true = np.hypot(*(ps.points[u] - ps.points[v]).T)
    assert np.allclose(w, true, rtol=1e-12, atol=0)
    for x in range(n):
        assert np.all(np.diff(g.neighbors(x)) > 0)


def test_save_edges(tmp_path):
    g = build_knn_graph(LINE, 1)
    path, meta = save_edges(g, tmp_path / "e.csv", seed=3)
    lines = path.read_text().splitlines()
    assert lines[0] == "u,v,length"
    assert lines[1:] == ["0,1,1.0", "1,2,2.0"]
    assert json.loads(meta.read_text()) == {"n": 3, "k": 1, "seed": 3}
