"""Interference-driven forgetting: accuracy against age as competitors grow.

Each seed stores the targets at ages stratified over ``n_age_bins`` equal bins
of ``[0, horizon]`` together with ``n_near`` competitors at uniform ages, then
queries every target with its own noise-corrupted embedding.  A query
succeeds when the target ranks first.  The ages, competitor ages and query
noise of a seed are shared by all competitor levels (common random numbers),
so levels differ only in the competitors added.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..backends import SimilarityGraph, bm25_build, bm25_scores, build_graph, personalized_pagerank, seed_from_scores
from ..core import DEFAULT_SEEDS, DecayParams, NoiseParams, decay_factor, noise_scale, normalize_rows, substream
from ..errors import ConfigError, PoolTooSmall
from ..parallel import run_cells
from ..stats import FitResult, bootstrap_ci, fit_power, floor_zero_bins

BACKENDS = ("vector", "graph", "bm25")


@dataclass(frozen=True)
class ForgettingConfig:
    n_targets: int = 100
    n_near_levels: tuple = (0, 10, 50, 100, 200, 500, 1000, 5000, 10000)
    horizon_days: float = 30.0
    n_age_bins: int = 10
    decay: DecayParams = field(default_factory=DecayParams)
    noise: NoiseParams = field(default_factory=lambda: NoiseParams(0.5))
    seeds: tuple = DEFAULT_SEEDS
    # noise lives in the first ``noise_dims`` coordinates (None: all of them)
    noise_dims: int | None = None
    edge_threshold: float = 0.7
    damping: float = 0.85
    n_boot: int = 10_000

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.n_age_bins < 3:
            raise ConfigError("need at least 3 age bins for a power-law fit")
        if self.n_targets < self.n_age_bins:
            raise ConfigError("need at least one target per age bin")
        if self.horizon_days <= 0:
            raise ConfigError("horizon_days must be positive")
        if any(n < 0 for n in self.n_near_levels) or not self.n_near_levels:
            raise ConfigError("n_near_levels must be a nonempty list of counts")
        object.__setattr__(self, "n_near_levels", tuple(int(n) for n in self.n_near_levels))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @property
    def bin_width(self) -> float:
        return self.horizon_days / self.n_age_bins

    @property
    def bin_midpoints(self) -> np.ndarray:
        return (np.arange(self.n_age_bins) + 0.5) * self.bin_width


@dataclass
class LevelResult:
    n_near: int
    accuracy: np.ndarray  # (n_seeds, n_bins)
    b_per_seed: np.ndarray
    b_mean: float
    b_ci: tuple
    fit: FitResult  # fit of the seed-averaged curve
    n_floored: int = 0

    @property
    def mean_accuracy(self) -> np.ndarray:
        return self.accuracy.mean(axis=0)


@dataclass
class ForgettingResult:
    config: ForgettingConfig
    backend: str
    levels: list

    @property
    def bin_midpoints(self) -> np.ndarray:
        return self.config.bin_midpoints

    def level(self, n_near: int) -> LevelResult:
        for lv in self.levels:
            if lv.n_near == n_near:
                return lv
        raise KeyError(n_near)

    def b_curve(self):
        return [(lv.n_near, lv.b_mean, lv.b_ci) for lv in self.levels]


def nondecreasing_up_to_ci(means, cis) -> bool:
    """True unless some later value drops below an earlier one with disjoint CIs."""
    for i in range(len(means)):
        for j in range(i + 1, len(means)):
            if means[j] < means[i] and cis[j][1] < cis[i][0]:
                return False
    return True


def _draw_seed(cfg: ForgettingConfig, seed: int, n_pool: int, d: int):
    """Target ages, competitor ages and unit query noise for one seed."""
    rng = substream(seed, "forgetting", "ages")
    n_t, nb = cfg.n_targets, cfg.n_age_bins
    bins = np.arange(n_t) % nb
    t_age = (bins + rng.random(n_t)) * cfg.bin_width
    c_age = rng.random(n_pool) * cfg.horizon_days
    nd = cfg.noise_dims or d
    z = substream(seed, "forgetting", "noise").standard_normal((n_t, nd))
    return bins, t_age, c_age, z


def _queries(cfg: ForgettingConfig, targets: np.ndarray, t_age, z) -> np.ndarray:
    if cfg.noise.sigma == 0:
        return targets.copy()
    nd = z.shape[1]
    eps = np.zeros_like(targets)
    eps[:, :nd] = noise_scale(t_age, cfg.noise.sigma, nd)[:, None] * z
    return normalize_rows(targets + eps)


def forgetting_cell(cfg, seed, targets, pool, backend, tokens=None, graph=None, compression=None):
    """Per-bin accuracy ``(n_levels, n_bins)`` and bin counts for one seed."""
    n_t = len(targets)
    max_level = max(cfg.n_near_levels)
    bins, t_age, c_age, z = _draw_seed(cfg, seed, max_level, targets.shape[1])
    counts = np.bincount(bins, minlength=cfg.n_age_bins)
    Q = _queries(cfg, targets, t_age, z) if backend != "bm25" else None
    all_ages = np.concatenate([t_age, c_age])
    acc = np.empty((len(cfg.n_near_levels), cfg.n_age_bins))
    for li, n_near in enumerate(cfg.n_near_levels):
        m = n_t + n_near
        correct = np.arange(n_t)
        if backend == "bm25":
            index = bm25_build(tokens[:m])
            hit = np.array([np.argmax(bm25_scores(index, tokens[i])) == i for i in range(n_t)])
        else:
            if compression is not None:
                centroids, labels = compression
                labels = labels[:m]
                if len(labels) != m:
                    raise PoolTooSmall("compression labels do not cover the store")
                k = centroids.shape[0]
                sizes = np.bincount(labels, minlength=k)
                ages = np.bincount(labels, weights=all_ages[:m], minlength=k) / np.maximum(sizes, 1)
                V = centroids
                correct = labels[:n_t]
            else:
                V = np.vstack([targets, pool[:n_near]])
                ages = all_ages[:m]
            S = (Q @ V.T) * decay_factor(ages, cfg.decay)
            if backend == "graph":
                sub = graph if graph.adjacency.shape[0] == m else _subgraph(graph, m)
                P = personalized_pagerank(sub, seed_from_scores(S, cfg.edge_threshold), cfg.damping)
                top = np.argmax(P, axis=0)
            else:
                top = np.argmax(S, axis=1)
            hit = top == correct
        acc[li] = np.bincount(bins, weights=hit.astype(float), minlength=cfg.n_age_bins) / counts
    return acc, counts


def _subgraph(g, m):
    A = g.adjacency[:m, :m].tocsr()
    return SimilarityGraph(g.nodes[:m], A, g.edge_threshold)


def fit_seed_curve(mids, acc, counts) -> tuple[float, int]:
    floored, mask = floor_zero_bins(acc, counts)
    return fit_power(mids, floored).params["b"], int(mask.sum())


def run_forgetting(
    cfg: ForgettingConfig,
    targets,
    pool,
    backend: str = "vector",
    tokens=None,
    graph=None,
    compression=None,
    jobs: int = 1,
) -> ForgettingResult:
    """Run every (seed, level) cell and fit ``R(t) = a * t**-b`` per level.

    ``tokens`` (keyword documents for targets followed by pool items) is
    required for the ``bm25`` back end.  ``graph`` may be passed prebuilt for
    the ``graph`` back end; otherwise it is built on raw cosine.
    ``compression=(centroids, labels)`` replaces the store by cluster
    centroids, each aged by the mean age of its members; a query then succeeds
    when its target's centroid ranks first.
    """
    if backend not in BACKENDS:
        raise ConfigError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    targets = np.asarray(targets, dtype=float)
    pool = np.asarray(pool, dtype=float).reshape(-1, targets.shape[1])
    if len(targets) != cfg.n_targets:
        raise ConfigError(f"config expects {cfg.n_targets} targets, got {len(targets)}")
    max_level = max(cfg.n_near_levels)
    if len(pool) < max_level:
        raise PoolTooSmall(f"pool holds {len(pool)} competitors, levels need {max_level}")
    pool = pool[:max_level]
    if backend == "bm25":
        if tokens is None or len(tokens) < cfg.n_targets + max_level:
            raise ConfigError("bm25 backend needs a token document per stored item")
    if backend == "graph" and graph is None:
        graph = build_graph(np.vstack([targets, pool]), cfg.edge_threshold)

    cells = [(cfg, s, targets, pool, backend, tokens, graph, compression) for s in cfg.seeds]
    out = run_cells(forgetting_cell, cells, jobs)
    acc = np.stack([a for a, _ in out])  # (seeds, levels, bins)
    counts = out[0][1]
    mids = cfg.bin_midpoints
    levels = []
    for li, n_near in enumerate(cfg.n_near_levels):
        per_seed = [fit_seed_curve(mids, acc[si, li], counts) for si in range(len(cfg.seeds))]
        b = np.array([p[0] for p in per_seed])
        ci = bootstrap_ci(b, n_resamples=cfg.n_boot, rng=substream(0, "forgetting-ci", backend, n_near)) if b.size > 1 else (float(b[0]),) * 2
        mean_curve, _ = floor_zero_bins(acc[:, li].mean(axis=0), counts * len(cfg.seeds))
        levels.append(
            LevelResult(
                n_near=n_near,
                accuracy=acc[:, li],
                b_per_seed=b,
                b_mean=float(b.mean()),
                b_ci=ci,
                fit=fit_power(mids, mean_curve),
                n_floored=sum(p[1] for p in per_seed),
            )
        )
    return ForgettingResult(cfg, backend, levels)
