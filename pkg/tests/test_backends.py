import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import sparse

from interference_lab.backends import (
    SimilarityGraph,
    bm25_build,
    bm25_query,
    bm25_scores,
    build_graph,
    graph_top1,
    personalized_pagerank,
    retrieval_agreement,
    seed_from_scores,
    tokenize,
)
from interference_lab.core import normalize_rows
from interference_lab.errors import LengthMismatch


def _graph(A):
    A = sparse.csr_matrix(np.asarray(A, dtype=float))
    return SimilarityGraph(np.arange(A.shape[0]), A, 0.0)


def test_pagerank_path_matches_linear_solve():
    A = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    s = np.array([1.0, 0.0, 0.0])
    d = 0.85
    W = (A / A.sum(axis=1, keepdims=True)).T
    ref = (1 - d) * np.linalg.solve(np.eye(3) - d * W, s)
    p = personalized_pagerank(_graph(A), s, d, tol=1e-14)
    np.testing.assert_allclose(p, ref, atol=1e-12)


def test_pagerank_dangling_mass_returns_to_seed():
    A = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=float)
    s = np.array([0.0, 0.0, 1.0])
    p = personalized_pagerank(_graph(A), s)
    np.testing.assert_allclose(p, s, atol=1e-12)


def _random_graph(rng, n):
    X = normalize_rows(rng.standard_normal((n, 4)))
    return build_graph(X, 0.3)


@given(st.integers(0, 10_000), st.integers(5, 30))
def test_pagerank_is_distribution_and_permutation_equivariant(seed, n):
    rng = np.random.default_rng(seed)
    g = _random_graph(rng, n)
    s = rng.random(n)
    s /= s.sum()
    p = personalized_pagerank(g, s)
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-8
    perm = rng.permutation(n)
    gp = SimilarityGraph(g.nodes[perm], g.adjacency[perm][:, perm].tocsr(), g.edge_threshold)
    np.testing.assert_allclose(personalized_pagerank(gp, s[perm]), p[perm], atol=1e-9)


def test_graph_invariants():
    rng = np.random.default_rng(0)
    X = normalize_rows(rng.standard_normal((200, 5)))
    g = build_graph(X, 0.6, block=37)
    A = g.adjacency
    assert (A != A.T).nnz == 0
    assert np.all(A.diagonal() == 0)
    assert np.all(A.data > 0.6)
    S = X @ X.T
    np.fill_diagonal(S, 0)
    assert g.n_edges == int(np.sum(np.triu(S > 0.6, 1)))
    assert all(i < j for i, j, _ in g.edges())


def test_seed_from_scores_and_fallback():
    S = np.array([[0.9, 0.8, 0.1], [0.2, 0.3, 0.1]])
    P = seed_from_scores(S, 0.5)
    np.testing.assert_allclose(P[:, 0], [0.9 / 1.7, 0.8 / 1.7, 0.0])
    np.testing.assert_allclose(P[:, 1], [0.0, 1.0, 0.0])


def test_graph_top1_isolated_nodes_is_nearest_neighbour():
    X = np.eye(4)
    g = build_graph(X, 0.7)
    S = np.array([[0.1, 0.6, 0.2, 0.0]])
    assert graph_top1(g, S).tolist() == [1]


def test_tokenize():
    assert tokenize("Hello, World! 42x") == ["hello", "world", "42x"]


def test_bm25_hand_computed():
    idx = bm25_build(["a b", "a a b", "c"])
    # N = 3, avgdl = 2, k1 = 1.5, b = 0.75
    idf_a = math.log((3 - 2 + 0.5) / (2 + 0.5) + 1)
    idf_c = math.log((3 - 1 + 0.5) / (1 + 0.5) + 1)
    k1, b = 1.5, 0.75

    def term(tf, dl, idf):
        return idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / 2.0))

    np.testing.assert_allclose(bm25_scores(idx, "a"), [term(1, 2, idf_a), term(2, 3, idf_a), 0.0], atol=1e-9)
    np.testing.assert_allclose(bm25_scores(idx, "c"), [0.0, 0.0, term(1, 1, idf_c)], atol=1e-9)
    assert bm25_scores(idx, "zzz").tolist() == [0.0, 0.0, 0.0]


def test_bm25_postings_consistent():
    docs = ["x y z", "y y", "z q q q"]
    idx = bm25_build(docs)
    assert np.all(idx.doc_lengths > 0)
    for term, (ids, tfs) in idx.postings.items():
        for i, tf in zip(ids, tfs):
            assert tokenize(docs[i]).count(term) == tf


def test_bm25_query_ranks_and_rerank_hook():
    idx = bm25_build(["a b", "a a b", "c"])
    ranked = bm25_query(idx, "a", top_k=3)
    assert [i for i, _ in ranked] == [1, 0, 2]
    assert bm25_query(idx, "a", rerank=lambda r: r[::-1])[0][0] == 2
    assert bm25_query(idx, "") == []


def test_retrieval_agreement():
    assert retrieval_agreement([1, 2, 3], [1, 2, 3]) == 1.0
    assert retrieval_agreement([[(1, 0.9)], [(2, 0.5)]], [[(4, 0.1)], [(5, 0.2)]]) == 0.0
    with pytest.raises(LengthMismatch):
        retrieval_agreement([1], [1, 2])
