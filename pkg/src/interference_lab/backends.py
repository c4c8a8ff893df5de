"""Alternative retrieval back ends: a cosine similarity graph searched with
personalised PageRank, and Okapi BM25 keyword retrieval."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import LengthMismatch, NonConvergence


@dataclass(frozen=True, eq=False)
class SimilarityGraph:
    """Undirected graph with an edge wherever cosine exceeds ``edge_threshold``.

    ``adjacency`` is a symmetric CSR matrix of edge weights (the cosines) with
    an empty diagonal; ``nodes`` are the trace ids in row order.
    """

    nodes: np.ndarray
    adjacency: sparse.csr_matrix
    edge_threshold: float

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz // 2

    def edges(self):
        upper = sparse.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return [(int(self.nodes[i]), int(self.nodes[j]), float(w)) for i, j, w in zip(upper.row[order], upper.col[order], upper.data[order])]

    def components(self) -> np.ndarray:
        _, labels = csgraph.connected_components(self.adjacency, directed=False)
        return labels


def build_graph(embeddings, edge_threshold: float = 0.7, ids=None, block: int = 2048) -> SimilarityGraph:
    """Exhaustive pairwise construction, processed in row blocks."""
    X = np.asarray(embeddings, dtype=float)
    n = X.shape[0]
    rows, cols, vals = [], [], []
    for start in range(0, n, block):
        S = X[start : start + block] @ X.T
        r, c = np.nonzero(S > edge_threshold)
        r = r + start
        keep = r != c
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(np.minimum(S[r[keep] - start, c[keep]], 1.0))
    r = np.concatenate(rows) if rows else np.zeros(0, int)
    c = np.concatenate(cols) if cols else np.zeros(0, int)
    v = np.concatenate(vals) if vals else np.zeros(0)
    A = sparse.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
    # floating point can make S[i, j] and S[j, i] differ in the last bit
    A = A.maximum(A.T).tocsr()
    A.sort_indices()
    nodes = np.arange(n) if ids is None else np.asarray(ids)
    return SimilarityGraph(nodes, A, float(edge_threshold))


def personalized_pagerank(
    g: SimilarityGraph,
    seed_distribution,
    damping: float = 0.85,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> np.ndarray:
    """Personalised PageRank by power iteration.

    ``seed_distribution`` is a length-n vector or an ``(n, q)`` matrix of q
    seed vectors, each summing to one; the result has the same shape.  Walks
    follow edges with probability proportional to weight; mass sitting on a
    node without edges returns to the seed.
    """
    n = g.adjacency.shape[0]
    if n == 0:
        raise ValueError("graph is empty")
    P0 = np.asarray(seed_distribution, dtype=float)
    single = P0.ndim == 1
    P0 = P0.reshape(n, -1)
    if np.any(P0 < 0) or not np.allclose(P0.sum(axis=0), 1.0, atol=1e-9):
        raise ValueError("seed distribution must be nonnegative and sum to 1")
    deg = np.asarray(g.adjacency.sum(axis=1)).ravel()
    dangling = deg == 0
    inv = np.where(dangling, 0.0, 1.0 / np.where(dangling, 1.0, deg))
    # column-stochastic transition: W[j, i] = A[i, j] / deg[i]
    W = (g.adjacency.multiply(inv[:, None])).T.tocsr()
    p = P0.copy()
    for it in range(1, max_iter + 1):
        lost = p[dangling].sum(axis=0)
        nxt = (1.0 - damping) * P0 + damping * (W @ p + P0 * lost)
        change = np.abs(nxt - p).sum(axis=0).max()
        p = nxt
        if change < tol:
            return p[:, 0] if single else p
    raise NonConvergence(f"PageRank did not converge in {max_iter} iterations", residual=float(change), iterations=max_iter)


def seed_from_scores(scores: np.ndarray, threshold: float) -> np.ndarray:
    """Seed distributions from query scores, one column per query.

    Every node whose score reaches ``threshold`` is a seed, weighted in
    proportion to its score; a query with no such node seeds its single best
    match (lowest index on ties).
    """
    S = np.atleast_2d(np.asarray(scores, dtype=float))  # (q, n)
    W = np.where(S >= threshold, S, 0.0)
    empty = W.sum(axis=1) <= 0
    if empty.any():
        best = np.argmax(S[empty], axis=1)
        W[np.flatnonzero(empty), best] = 1.0
    W = W / W.sum(axis=1, keepdims=True)
    return W.T


def graph_top1(g: SimilarityGraph, scores: np.ndarray, seed_threshold: float | None = None, damping: float = 0.85, tol: float = 1e-10) -> np.ndarray:
    """Index of the highest-PageRank node for each query (lowest index on ties)."""
    thr = g.edge_threshold if seed_threshold is None else seed_threshold
    P = personalized_pagerank(g, seed_from_scores(scores, thr), damping, tol)
    return np.argmax(P, axis=0)


# --------------------------------------------------------------------------
# BM25

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric runs; no stemming, no stopwords."""
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True, eq=False)
class Bm25Index:
    postings: dict  # term -> (doc ids array, term frequencies array)
    doc_lengths: np.ndarray
    avg_doc_length: float
    k1: float = 1.5
    b: float = 0.75
    idf: dict = field(default_factory=dict)

    @property
    def n_docs(self) -> int:
        return len(self.doc_lengths)


def bm25_build(corpus: Sequence, k1: float = 1.5, b: float = 0.75) -> Bm25Index:
    """Index a corpus of token lists (strings are tokenised first)."""
    docs = [tokenize(d) if isinstance(d, str) else list(d) for d in corpus]
    if not docs:
        raise ValueError("corpus is empty")
    lengths = np.array([len(d) for d in docs], dtype=float)
    if np.any(lengths == 0):
        raise ValueError(f"document {int(np.argmin(lengths))} has no tokens")
    acc: dict[str, tuple[list, list]] = {}
    for i, d in enumerate(docs):
        for term, tf in Counter(d).items():
            ids, tfs = acc.setdefault(term, ([], []))
            ids.append(i)
            tfs.append(tf)
    n = len(docs)
    postings, idf = {}, {}
    for term, (ids, tfs) in acc.items():
        postings[term] = (np.array(ids), np.array(tfs, dtype=float))
        df = len(ids)
        idf[term] = math.log((n - df + 0.5) / (df + 0.5) + 1.0)
    return Bm25Index(postings, lengths, float(lengths.mean()), k1, b, idf)


def bm25_scores(index: Bm25Index, query) -> np.ndarray:
    terms = tokenize(query) if isinstance(query, str) else list(query)
    scores = np.zeros(index.n_docs)
    norm = index.k1 * (1.0 - index.b + index.b * index.doc_lengths / index.avg_doc_length)
    for term in terms:
        hit = index.postings.get(term)
        if hit is None:
            continue
        ids, tf = hit
        scores[ids] += index.idf[term] * tf * (index.k1 + 1.0) / (tf + norm[ids])
    return scores


def bm25_query(
    index: Bm25Index,
    query,
    top_k: int = 50,
    rerank: Callable[[list], list] | None = None,
) -> list[tuple[int, float]]:
    """Top-k ``(doc id, score)`` by descending score, ties by ascending id.

    ``rerank`` receives the candidate list and may reorder it; the default is
    a pass-through.
    """
    terms = tokenize(query) if isinstance(query, str) else list(query)
    if not terms:
        return []
    s = bm25_scores(index, terms)
    order = np.lexsort((np.arange(len(s)), -s))[:top_k]
    ranked = [(int(i), float(s[i])) for i in order]
    return rerank(ranked) if rerank is not None else ranked


def retrieval_agreement(rankings_a: Sequence, rankings_b: Sequence) -> float:
    """Fraction of queries whose top-1 id is identical in both rankings.

    Each ranking is either a bare top-1 id or a list whose first entry is an
    id or an ``(id, score)`` pair.  Empty rankings never agree.
    """
    if len(rankings_a) != len(rankings_b):
        raise LengthMismatch(f"{len(rankings_a)} vs {len(rankings_b)} queries")
    if len(rankings_a) == 0:
        return float("nan")

    def top(r):
        if isinstance(r, (list, tuple)):
            if not r:
                return None
            r = r[0]
            return r[0] if isinstance(r, (list, tuple)) else r
        return r

    same = [top(a) is not None and top(a) == top(b) for a, b in zip(rankings_a, rankings_b)]
    return float(np.mean(same))
