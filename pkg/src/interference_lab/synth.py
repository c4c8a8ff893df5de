"""Synthetic embeddings with a controlled intrinsic dimension.

Latent points ``z ~ N(0, I_{d_loc})`` are pushed through a fixed random smooth
map into ``R^{d_nom}`` and normalised onto the unit sphere.  The map mixes a
linear isometry with a sinusoidal lift (random Fourier features of ``z``):

    x = sqrt(1-c) * Q z / sqrt(d_loc) + offset * e0 + sqrt(c) * R f(z)

where ``c`` is ``curvature_mix``.  The lift behaves like a Gaussian kernel in
latent space, so far-apart points become nearly orthogonal while neighbours
stay close, and the local dimension stays ``d_loc``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import normalize_rows


@dataclass(frozen=True)
class ManifoldConfig:
    d_loc: int = 12
    d_nom: int = 1024
    curvature_mix: float = 0.8
    n: int = 1000
    cluster_spec: tuple | None = None  # (n_clusters, spread) for DRM lists
    bandwidth: float = 3.0
    # radial anchor; None -> 1.0 for a purely linear map (otherwise the sphere
    # projection would drop one dimension), 0.0 when the lift is active
    offset: float | None = None

    def __post_init__(self):
        if self.d_loc < 1:
            raise ValueError("d_loc must be >= 1")
        if self.d_loc > self.d_nom:
            raise ValueError("d_loc must not exceed d_nom")
        if not 0.0 <= self.curvature_mix <= 1.0:
            raise ValueError("curvature_mix must lie in [0, 1]")
        if self.n < 0:
            raise ValueError("n must be >= 0")

    @property
    def resolved_offset(self) -> float:
        if self.offset is not None:
            return float(self.offset)
        return 1.0 if self.curvature_mix == 0 else 0.0


class ManifoldMap:
    """The fixed random embedding ``z -> x`` drawn once per data seed."""

    def __init__(self, cfg: ManifoldConfig, rng: np.random.Generator):
        self.cfg = cfg
        d_loc, d_nom = cfg.d_loc, cfg.d_nom
        basis, _ = np.linalg.qr(rng.standard_normal((d_nom, d_nom)))
        self.Q = basis[:, :d_loc]
        rest = basis[:, d_loc:]
        self.e0 = rest[:, 0] if rest.shape[1] else None
        lift = rest[:, 1:] if rest.shape[1] > 1 else None
        if lift is None or lift.shape[1] < 1:
            # no orthogonal complement left: lift shares the space
            lift, _ = np.linalg.qr(rng.standard_normal((d_nom, d_nom)))
        self.R = lift
        m = self.R.shape[1]
        self.W = rng.standard_normal((d_loc, m)) * (cfg.bandwidth / np.sqrt(d_loc))
        self.phase = rng.uniform(0.0, 2.0 * np.pi, m)

    def embed(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        cfg = self.cfg
        c = cfg.curvature_mix
        x = np.sqrt(1.0 - c) * (z / np.sqrt(cfg.d_loc)) @ self.Q.T
        off = cfg.resolved_offset
        if off and self.e0 is not None:
            x = x + off * self.e0
        if c > 0:
            m = self.R.shape[1]
            f = np.sqrt(2.0 / m) * np.cos(z @ self.W + self.phase)
            x = x + np.sqrt(c) * (f @ self.R.T)
        return normalize_rows(x)


def sample_manifold(cfg: ManifoldConfig, rng: np.random.Generator) -> np.ndarray:
    """``cfg.n`` unit vectors from a freshly drawn random manifold."""
    mp = ManifoldMap(cfg, rng)
    if cfg.n == 0:
        return np.zeros((0, cfg.d_nom))
    return mp.embed(rng.standard_normal((cfg.n, cfg.d_loc)))


@dataclass
class Corpus:
    """Targets plus a pool of near competitors, all on one manifold.

    ``owner[i]`` is the target that pool item ``i`` was drawn around.  Pool
    items cycle through the targets, so any prefix of the pool spreads its
    competitors evenly.
    """

    targets: np.ndarray
    pool: np.ndarray
    owner: np.ndarray
    target_latent: np.ndarray = field(repr=False)
    pool_latent: np.ndarray = field(repr=False)


def sample_corpus(
    cfg: ManifoldConfig,
    n_targets: int,
    n_pool: int,
    near_spread: float,
    rng: np.random.Generator,
) -> Corpus:
    mp = ManifoldMap(cfg, rng)
    zt = rng.standard_normal((n_targets, cfg.d_loc))
    owner = np.arange(n_pool) % max(n_targets, 1)
    zp = zt[owner] + near_spread * rng.standard_normal((n_pool, cfg.d_loc))
    return Corpus(mp.embed(zt), mp.embed(zp) if n_pool else np.zeros((0, cfg.d_nom)), owner, zt, zp)


@dataclass
class DrmList:
    list_id: str
    studied: np.ndarray  # (15, d)
    lure: np.ndarray
    unrelated_probe: np.ndarray
    studied_labels: tuple = ()
    lure_label: str = ""


def orthogonal_offset(span: np.ndarray, norm: float, rng: np.random.Generator) -> np.ndarray:
    """Random vector of length ``norm`` orthogonal to the rows of ``span``."""
    Qs, _ = np.linalg.qr(span.T)
    v = rng.standard_normal(span.shape[1])
    v -= Qs @ (Qs.T @ v)
    return norm * v / np.linalg.norm(v)


def sample_drm_clusters(
    cfg: ManifoldConfig,
    rng: np.random.Generator,
    n_studied: int = 15,
    delta_true: float = 0.0,
) -> list[DrmList]:
    """DRM-like word lists: tight latent clusters with a constructed lure.

    The lure is a convex combination of the studied vectors plus an offset of
    length ``delta_true`` orthogonal to their span, so its distance to the
    convex hull is exactly ``delta_true``.  It is deliberately not rescaled to
    unit norm, which would move it off that distance.
    """
    if cfg.cluster_spec is None:
        raise ValueError("cluster_spec=(n_clusters, spread) is required")
    n_lists, spread = cfg.cluster_spec
    mp = ManifoldMap(cfg, rng)
    lists = []
    for i in range(int(n_lists)):
        center = rng.standard_normal(cfg.d_loc)
        studied = mp.embed(center + spread * rng.standard_normal((n_studied, cfg.d_loc)))
        weights = rng.dirichlet(np.ones(n_studied))
        lure = weights @ studied
        if delta_true > 0:
            lure = lure + orthogonal_offset(studied, delta_true, rng)
        unrelated = mp.embed(rng.standard_normal(cfg.d_loc))[0]
        lists.append(DrmList(f"list{i:02d}", studied, lure, unrelated))
    return lists


def token_corpus(X, rng: np.random.Generator, vocab_size: int = 2000, words_per_doc: int = 12, prefix: str = "w") -> list[list[str]]:
    """Keyword documents for embedding rows.

    Each row gets the vocabulary words whose random directions it projects onto
    most strongly, plus one word unique to the row, so lexical overlap tracks
    semantic similarity only loosely.
    """
    X = np.asarray(X, dtype=float)
    dirs = rng.standard_normal((X.shape[1], vocab_size))
    docs = []
    for start in range(0, X.shape[0], 2048):
        proj = X[start : start + 2048] @ dirs
        top = np.argpartition(-proj, words_per_doc, axis=1)[:, :words_per_doc]
        for j, row in enumerate(top):
            docs.append([f"{prefix}{w}" for w in np.sort(row)] + [f"item{start + j}"])
    return docs
