"""Mitigation strategies and the immunity-versus-usefulness frontier.

Each transformation returns a new embedding matrix; :func:`solution_sweep`
pushes every transformed store through the forgetting harness and records
one :class:`ParetoPoint` per configuration.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .backends import bm25_build, bm25_scores
from .core import normalize_rows, substream
from .errors import ConfigError, NearDependence, RankDeficient, ShrinkRequest, TooManyVectors
from .experiments.forgetting import ForgettingConfig, run_forgetting
from .geometry import participation_ratio
from .stats import bootstrap_ci

# --------------------------------------------------------------------------
# transformations


def zero_pad(X, d_target: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if d_target < X.shape[1]:
        raise ShrinkRequest(f"cannot pad {X.shape[1]} columns down to {d_target}")
    out = np.zeros((X.shape[0], d_target))
    out[:, : X.shape[1]] = X
    return out


def pca_reduce(X, d: int) -> np.ndarray:
    """Project onto the top ``d`` right singular vectors and renormalise rows.

    The basis is taken from the uncentred matrix, so when ``d`` equals the
    rank the projection is an exact rotation of the row space and cosines are
    preserved.
    """
    X = np.asarray(X, dtype=float)
    _, s, Vt = np.linalg.svd(X, full_matrices=False)
    rank = int(np.sum(s > s[0] * max(X.shape) * np.finfo(float).eps)) if s.size else 0
    if d > rank:
        raise RankDeficient(f"requested {d} components but the data has rank {rank}")
    return normalize_rows(X @ Vt[:d].T)


def nn_accuracy(original, transformed, tie_tol: float = 1e-12) -> float:
    """Fraction of items whose nearest neighbour survives the transformation.

    Neighbours are by cosine, excluding the item itself.  If several items tie
    for the original nearest score, landing on any of them counts.
    """
    A = normalize_rows(original)
    B = normalize_rows(transformed)
    n = len(A)
    if n < 2:
        return 1.0
    hits = 0
    for start in range(0, n, 1024):
        idx = np.arange(start, min(start + 1024, n))
        Sa = A[idx] @ A.T
        Sb = B[idx] @ B.T
        Sa[np.arange(len(idx)), idx] = -np.inf
        Sb[np.arange(len(idx)), idx] = -np.inf
        best_b = np.argmax(Sb, axis=1)
        top_a = Sa.max(axis=1)
        hits += int(np.sum(Sa[np.arange(len(idx)), best_b] >= top_a - tie_tol))
    return hits / n


def mean_offdiag_cosine(X) -> float:
    Y = normalize_rows(X)
    S = np.abs(Y @ Y.T)
    n = len(Y)
    return float((S.sum() - np.trace(S)) / (n * (n - 1))) if n > 1 else 0.0


@dataclass
class TransformDiagnostics:
    mean_offdiag_cosine: float
    nn_accuracy: float


def orthogonalize(X, reorth: bool = True):
    """Modified Gram-Schmidt in row order, optionally with a second pass.

    Returns the orthonormal rows and diagnostics against the input.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n > d:
        raise TooManyVectors(f"cannot orthogonalise {n} vectors in {d} dimensions")
    Q = X.copy()
    for i in range(n):
        v = Q[i]
        for _ in range(2 if reorth else 1):
            for j in range(i):
                v -= (Q[j] @ v) * Q[j]
        nrm = np.linalg.norm(v)
        if nrm < 1e-10:
            raise NearDependence(f"vector {i} lies in the span of the previous ones (residual {nrm:.2e})")
        Q[i] = v / nrm
    return Q, TransformDiagnostics(mean_offdiag_cosine(Q), nn_accuracy(X, Q))


def random_project(X, k: int, rng: np.random.Generator):
    """Gaussian projection with ``N(0, 1/k)`` entries, rows renormalised."""
    X = np.asarray(X, dtype=float)
    if k < 1:
        raise ConfigError("k must be >= 1")
    G = rng.standard_normal((X.shape[1], k)) / math.sqrt(k)
    Y = normalize_rows(X @ G)
    return Y, TransformDiagnostics(mean_offdiag_cosine(Y) if len(Y) <= 5000 else float("nan"), nn_accuracy(X, Y))


# --------------------------------------------------------------------------
# spherical mini-batch k-means


@dataclass
class KMeansResult:
    centroids: np.ndarray  # unit rows
    labels: np.ndarray
    n_epochs: int
    n_reseeded: int = 0


def _kmeanspp(X, k, rng):
    n = len(X)
    centers = [int(rng.integers(n))]
    # squared chord distance on the sphere: 2 - 2 cos
    d2 = np.maximum(2.0 - 2.0 * (X @ X[centers[0]]), 0.0)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # fewer distinct points than k: fill deterministically
            rest = np.setdiff1d(np.arange(n), centers)
            centers.append(int(rest[0]))
        else:
            centers.append(int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right").clip(0, n - 1)))
        d2 = np.minimum(d2, np.maximum(2.0 - 2.0 * (X @ X[centers[-1]]), 0.0))
    return X[centers].copy()


def _assign(X, C):
    Cn = C / np.linalg.norm(C, axis=1, keepdims=True)
    labels = np.empty(len(X), dtype=np.int64)
    sims = np.empty(len(X))
    for s in range(0, len(X), 2048):
        S = X[s : s + 2048] @ Cn.T
        labels[s : s + 2048] = np.argmax(S, axis=1)
        sims[s : s + 2048] = S[np.arange(len(S)), labels[s : s + 2048]]
    return labels, sims


def kmeans_compress(X, k: int, rng: np.random.Generator, batch: int = 256, max_epochs: int = 100) -> KMeansResult:
    """Spherical mini-batch k-means with k-means++ seeding.

    Centroids are running means of their assigned points (per-centre
    learning rate ``1/count``) and are renormalised for assignment.  Training
    stops early once a full pass leaves every assignment unchanged.
    Centroids left without members are reseeded at the point worst served by
    its own centroid.
    """
    X = normalize_rows(X)
    n = len(X)
    if not 1 <= k <= n:
        raise ConfigError(f"k must lie in [1, {n}]")
    C = _kmeanspp(X, k, rng)
    counts = np.ones(k)
    prev = None
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(n)
        for s in range(0, n, batch):
            idx = order[s : s + batch]
            lab, _ = _assign(X[idx], C)
            onehot = sparse.csr_matrix((np.ones(len(idx)), (lab, np.arange(len(idx)))), shape=(k, len(idx)))
            m = np.asarray(onehot.sum(axis=1)).ravel()
            sums = onehot @ X[idx]
            hit = m > 0
            C[hit] = (C[hit] * counts[hit, None] + sums[hit]) / (counts[hit] + m[hit])[:, None]
            counts += m
        labels, _ = _assign(X, C)
        if prev is not None and np.array_equal(labels, prev):
            break
        prev = labels
    labels, sims = _assign(X, C)
    reseeded = 0
    for _ in range(k):
        sizes = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(sizes == 0)
        if empty.size == 0:
            break
        far = int(np.argmin(sims))
        C[empty[0]] = X[far]
        reseeded += 1
        labels, sims = _assign(X, C)
    return KMeansResult(normalize_rows(C), labels, epoch, reseeded)


# --------------------------------------------------------------------------
# frontier


@dataclass
class ParetoPoint:
    solution_name: str
    config: str
    forgetting_b: float
    usefulness: float
    usefulness_metric: str
    d_eff_after: float = float("nan")
    n_competitors: int = 0
    b_ci: tuple = (float("nan"), float("nan"))
    dominated: bool = False
    flags: tuple = ()
    usefulness_ci: tuple = (float("nan"), float("nan"))

    def as_dict(self) -> dict:
        return {
            "solution": self.solution_name,
            "config": self.config,
            "b": self.forgetting_b,
            "b_ci": list(self.b_ci),
            "usefulness": self.usefulness,
            "usefulness_metric": self.usefulness_metric,
            "d_eff_after": self.d_eff_after,
            "n_competitors": self.n_competitors,
            "dominated": self.dominated,
            "flags": list(self.flags),
            "usefulness_ci": list(self.usefulness_ci),
        }


def pareto_label(points: list) -> list:
    """Mark a point dominated iff another has strictly lower b and strictly higher usefulness."""
    b = np.array([p.forgetting_b for p in points], dtype=float)
    u = np.array([p.usefulness for p in points], dtype=float)
    for i, p in enumerate(points):
        p.dominated = bool(np.any((b < b[i]) & (u > u[i])))
    return points


@dataclass(frozen=True)
class SolutionsConfig:
    n_competitors: int = 5000
    pca_dims: tuple = (64, 128, 256, 512)
    pad_dims: tuple = (2048, 4096)
    rp_dims: tuple = (32, 64, 128, 256)
    gs_vectors: int = 500
    kmeans_ks: tuple = (50, 100, 250, 500, 1000, 2500)
    # "original": pad noise stays in the original coordinates; "padded": noise in all
    pad_noise: str = "original"
    forgetting: ForgettingConfig = field(default_factory=ForgettingConfig)

    def __post_init__(self):
        if self.pad_noise not in ("original", "padded"):
            raise ConfigError("pad_noise must be 'original' or 'padded'")


def _b_of(cfg, targets, pool, jobs, **kw):
    res = run_forgetting(cfg, targets, pool, jobs=jobs, **kw)
    lv = res.levels[-1]
    return lv, res


def bm25_agreement(X, tokens) -> float:
    """Agreement of BM25 and cosine on each item's nearest other item."""
    X = normalize_rows(X)
    index = bm25_build(tokens)
    same = 0
    for i in range(len(X)):
        s = bm25_scores(index, tokens[i])
        s[i] = -np.inf
        c = X @ X[i]
        c[i] = -np.inf
        same += int(np.argmax(s) == np.argmax(c))
    return same / len(X)


def solution_sweep(scfg: SolutionsConfig, targets, pool, tokens=None, seed: int = 0, jobs: int = 1, include=None) -> list:
    """Run all solutions and return labelled Pareto points.

    ``include`` restricts the sweep to a subset of
    {"original", "pca", "pad", "bm25", "gram_schmidt", "random_projection", "kmeans"}.
    """
    targets = np.asarray(targets, dtype=float)
    n_t = len(targets)
    n_c = scfg.n_competitors
    pool = np.asarray(pool, dtype=float)[:n_c]
    if len(pool) < n_c:
        raise ConfigError(f"solutions need {n_c} competitors, pool has {len(pool)}")
    fcfg = replace(scfg.forgetting, n_near_levels=(n_c,), n_targets=n_t)
    store = np.vstack([targets, pool])
    want = set(include or ("original", "pca", "pad", "bm25", "gram_schmidt", "random_projection", "kmeans"))
    points = []

    def add(name, conf, lv, use, metric, Y, n_comp=n_c, flags=()):
        points.append(
            ParetoPoint(name, conf, lv.b_mean, float(use), metric, participation_ratio(Y), n_comp, tuple(lv.b_ci), flags=tuple(flags))
        )

    if "original" in want:
        lv, _ = _b_of(fcfg, targets, pool, jobs)
        add("original", f"d={store.shape[1]}", lv, 1.0, "nn_accuracy", store)
    if "pca" in want:
        for d in scfg.pca_dims:
            Y = pca_reduce(store, d)
            lv, _ = _b_of(fcfg, Y[:n_t], Y[n_t:], jobs)
            add("high_dim", f"pca d={d}", lv, nn_accuracy(store, Y), "nn_accuracy", Y)
    if "pad" in want:
        for d in scfg.pad_dims:
            Y = zero_pad(store, d)
            pc = fcfg if scfg.pad_noise == "padded" else replace(fcfg, noise_dims=store.shape[1])
            lv, _ = _b_of(pc, Y[:n_t], Y[n_t:], jobs)
            add("high_dim", f"zero-pad d={d}", lv, nn_accuracy(store, Y), "nn_accuracy", Y)
    if "bm25" in want:
        if tokens is None:
            raise ConfigError("the bm25 solution needs token documents")
        lv, _ = _b_of(fcfg, targets, pool, jobs, backend="bm25", tokens=tokens)
        add("bm25", "bm25 k1=1.5 b=0.75", lv, bm25_agreement(store, tokens[: len(store)]), "agreement", store)
    if "gram_schmidt" in want:
        m = scfg.gs_vectors
        Q, diag = orthogonalize(store[:m])
        gcfg = replace(fcfg, n_near_levels=(m - n_t,))
        lv, _ = _b_of(gcfg, Q[:n_t], Q[n_t:], jobs)
        add("gram_schmidt", f"{m} vectors", lv, diag.nn_accuracy, "nn_accuracy", Q, n_comp=m - n_t)
    if "random_projection" in want:
        for k in scfg.rp_dims:
            Y, diag = random_project(store, k, substream(seed, "solutions", "rp", k))
            lv, _ = _b_of(fcfg, Y[:n_t], Y[n_t:], jobs)
            add("random_projection", f"k={k}", lv, diag.nn_accuracy, "nn_accuracy", Y)
    if "kmeans" in want:
        for k in scfg.kmeans_ks:
            km = kmeans_compress(store, k, substream(seed, "solutions", "kmeans", k))
            lv, _ = _b_of(fcfg, targets, pool, jobs, compression=(km.centroids, km.labels))
            flags = ("single_memory",) if k == 1 else ()
            b = float("nan") if k == 1 else lv.b_mean
            per_seed = lv.accuracy.mean(axis=1)
            use_ci = bootstrap_ci(per_seed, n_resamples=fcfg.n_boot, rng=substream(seed, "solutions", "kmeans-ci", k)) if per_seed.size > 1 else (float(per_seed[0]),) * 2
            p = ParetoPoint(
                "compression", f"k={k}", b, float(lv.accuracy.mean()), "centroid_accuracy",
                participation_ratio(km.centroids) if k > 1 else float("nan"), n_c, tuple(lv.b_ci),
                flags=flags, usefulness_ci=tuple(use_ci),
            )
            points.append(p)
    if not points:
        warnings.warn("solution sweep produced no points", stacklevel=2)
    return pareto_label(points)
